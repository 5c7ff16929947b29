//! Higher-level evaluation reports over trained priors.

use super::classifier::classify_window;
use super::mmd::mmd;
use crate::diffusion::train::holdout_split;
use crate::diffusion::{
    forward_diffuse_into, sample_reverse, DenoiserModel, EpsPredictor, StyleDirective, StyleLabel,
};
use crate::env::dataset::GaitDataset;
use crate::error::Result;
use crate::prior::{PriorConfig, SmpPrior};
use crate::rng::{fill_normal, stream, Domain};

#[derive(Debug, Clone)]
pub struct PriorReport {
    /// MMD^2 between prior samples and held-out windows (z-space).
    pub mmd_model: f64,
    /// MMD^2 between standard-normal windows and held-out windows.
    pub mmd_normal: f64,
    /// Classifier accuracy of style-guided samples, per style.
    pub style_accuracy: Vec<(String, f64)>,
    pub mean_reward_dataset: f64,
    pub mean_reward_perturbed: f64,
    pub mean_reward_noise: f64,
}

/// Fidelity and reward-discrimination report for a trained prior against
/// its dataset. The held-out split matches the one used during training.
pub fn prior_report(
    model: &DenoiserModel,
    dataset: &GaitDataset,
    holdout_every: usize,
    sample_count: usize,
    reward_draws: usize,
    seed: u64,
) -> Result<PriorReport> {
    let dim = model.window_dim();
    let (train_idx, held_idx) = holdout_split(dataset.windows.len(), holdout_every);
    let held_z: Vec<Vec<f64>> = held_idx
        .iter()
        .map(|&w| {
            let mut z = vec![0.0; dim];
            model.normalize(&dataset.windows[w], &mut z);
            z
        })
        .collect();
    assert!(held_z.len() >= 2, "need held-out windows for the report");

    let mut rng = stream(seed, Domain::Sampling, 101);
    let samples: Vec<Vec<f64>> = (0..sample_count)
        .map(|_| sample_reverse(model, StyleLabel::Null, 1.0, &mut rng))
        .collect::<Result<_>>()?;
    let normals: Vec<Vec<f64>> = (0..sample_count)
        .map(|_| {
            let mut v = vec![0.0; dim];
            fill_normal(&mut rng, &mut v);
            v
        })
        .collect();
    let mmd_model = mmd(&samples, &held_z, None);
    let mmd_normal = mmd(&normals, &held_z, None);

    // Style accuracy of guided samples.
    let per_style = (sample_count / 4).max(32);
    let mut style_accuracy = Vec::new();
    let mut raw = vec![0.0; dim];
    for (s, name) in model.style_names.iter().enumerate() {
        let mut correct = 0;
        for _ in 0..per_style {
            let z = crate::diffusion::sample_reverse_directed(
                model,
                &StyleDirective::Cfg {
                    style: s,
                    w_cfg: 1.0,
                },
                &mut rng,
            )?;
            model.denormalize(&z, &mut raw);
            if classify_window(&raw, dataset.fps).style == s {
                correct += 1;
            }
        }
        style_accuracy.push((name.clone(), correct as f64 / per_style as f64));
    }

    // Reward discrimination: held-out vs z-noise-perturbed vs pure noise.
    let mut prior = SmpPrior::new(
        model.clone(),
        StyleDirective::Unconditional,
        PriorConfig::default(),
    )?;
    let warm: Vec<Vec<f64>> = train_idx
        .iter()
        .take(256)
        .map(|&w| {
            let mut z = vec![0.0; dim];
            model.normalize(&dataset.windows[w], &mut z);
            z
        })
        .collect();
    prior.warmup_stats(&warm, &mut rng)?;

    let mut sums = [0.0f64; 3];
    let mut noise = vec![0.0; dim];
    for k in 0..reward_draws {
        let window = &held_z[k % held_z.len()];
        sums[0] += prior.reward(window, &mut rng, None)?.reward;

        fill_normal(&mut rng, &mut noise);
        let perturbed: Vec<f64> = window
            .iter()
            .zip(noise.iter())
            .map(|(w, n)| w + 0.5 * n)
            .collect();
        sums[1] += prior.reward(&perturbed, &mut rng, None)?.reward;

        fill_normal(&mut rng, &mut noise);
        sums[2] += prior.reward(&noise, &mut rng, None)?.reward;
    }
    let n = reward_draws as f64;
    Ok(PriorReport {
        mmd_model,
        mmd_normal,
        style_accuracy,
        mean_reward_dataset: sums[0] / n,
        mean_reward_perturbed: sums[1] / n,
        mean_reward_noise: sums[2] / n,
    })
}

/// Mean denoising error per diffusion timestep, on held-out windows and on
/// perturbed copies. The gap between the curves narrows as the noise level
/// rises.
pub fn sds_error_curve(
    model: &DenoiserModel,
    dataset: &GaitDataset,
    holdout_every: usize,
    draws_per_step: usize,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>> {
    let dim = model.window_dim();
    let (_, held_idx) = holdout_split(dataset.windows.len(), holdout_every);
    let held_z: Vec<Vec<f64>> = held_idx
        .iter()
        .map(|&w| {
            let mut z = vec![0.0; dim];
            model.normalize(&dataset.windows[w], &mut z);
            z
        })
        .collect();
    let mut rng = stream(seed, Domain::Reward, 77);
    let mut eps = vec![0.0; dim];
    let mut x_i = vec![0.0; dim];
    let mut eps_hat = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let mut out = Vec::with_capacity(model.schedule.n);
    for i in 1..=model.schedule.n {
        let mut e_data = 0.0;
        let mut e_pert = 0.0;
        for k in 0..draws_per_step {
            let window = &held_z[k % held_z.len()];
            fill_normal(&mut rng, &mut eps);
            forward_diffuse_into(&model.schedule, window, i, &eps, &mut x_i);
            model.predict(&x_i, i, StyleLabel::Null, &mut eps_hat);
            e_data += eps
                .iter()
                .zip(eps_hat.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();

            fill_normal(&mut rng, &mut noise);
            let perturbed: Vec<f64> = window
                .iter()
                .zip(noise.iter())
                .map(|(w, n)| w + 0.5 * n)
                .collect();
            fill_normal(&mut rng, &mut eps);
            forward_diffuse_into(&model.schedule, &perturbed, i, &eps, &mut x_i);
            model.predict(&x_i, i, StyleLabel::Null, &mut eps_hat);
            e_pert += eps
                .iter()
                .zip(eps_hat.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        out.push((
            i,
            e_data / draws_per_step as f64,
            e_pert / draws_per_step as f64,
        ));
    }
    Ok(out)
}


#[cfg(test)]
mod train_probes {
    use super::*;
    use crate::diffusion::{ddpm_loss, sample_reverse, train_prior, TrainPriorConfig};
    use crate::env::dataset::load_dataset;

    #[test]
    #[ignore]
    fn prior_training_grid_probe() {
        let dataset =
            load_dataset(std::path::Path::new("/tmp/cal/data/dataset.smpd")).unwrap();
        for (steps, hidden, dropout, lr) in [
            (9_000usize, vec![64usize, 64], 0.1f64, 1e-3f64),
            (9_000, vec![64, 64], 0.25, 1e-3),
            (20_000, vec![64, 64], 0.25, 1e-3),
            (20_000, vec![96, 96], 0.25, 1e-3),
        ] {
            let cfg = TrainPriorConfig {
                steps,
                batch: 128,
                lr,
                ema_decay: 0.999,
                cond_dropout: dropout,
                hidden: hidden.clone(),
                log_every: 5000,
                ..TrainPriorConfig::default()
            };
            let t0 = std::time::Instant::now();
            let (model, log) = train_prior(&dataset, &cfg, 2).unwrap();
            let train_time = t0.elapsed();

            let dim = model.window_dim();
            let (_, held) = holdout_split(dataset.windows.len(), 10);
            let held_z: Vec<Vec<f64>> = held
                .iter()
                .map(|&w| {
                    let mut z = vec![0.0; dim];
                    model.normalize(&dataset.windows[w], &mut z);
                    z
                })
                .collect();
            let labels_true: Vec<StyleLabel> = held
                .iter()
                .map(|&w| StyleLabel::Id(dataset.style_of_window(w) as usize))
                .collect();
            let labels_null = vec![StyleLabel::Null; held.len()];
            let mut rng = stream(9, Domain::Reward, 3);
            let loss_cond = ddpm_loss(&model, &held_z, &labels_true, &mut rng);
            let loss_null = ddpm_loss(&model, &held_z, &labels_null, &mut rng);

            let mut sum_sq = 0.0;
            let mut samples = Vec::new();
            let ns = 128;
            for _ in 0..ns {
                let z = sample_reverse(&model, StyleLabel::Null, 1.0, &mut rng).unwrap();
                sum_sq += z.iter().map(|v| v * v).sum::<f64>() / dim as f64;
                samples.push(z);
            }
            let mmd_model = crate::eval::mmd(&samples, &held_z, None);

            let mut raw = vec![0.0; dim];
            let mut accs = Vec::new();
            for s in 0..3 {
                let mut correct = 0;
                for _ in 0..48 {
                    let z = crate::diffusion::sample_reverse_directed(
                        &model,
                        &StyleDirective::Cfg { style: s, w_cfg: 1.0 },
                        &mut rng,
                    )
                    .unwrap();
                    model.denormalize(&z, &mut raw);
                    if classify_window(&raw, dataset.fps).style == s {
                        correct += 1;
                    }
                }
                accs.push(correct as f64 / 48.0);
            }
            println!(
                "steps={steps} hidden={hidden:?} drop={dropout}: final {:.1}, cond {loss_cond:.1}, null {loss_null:.1}, sample var {:.2}, mmd {mmd_model:.4}, acc {accs:?} ({train_time:.0?})",
                log.final_loss,
                sum_sq / ns as f64
            );
        }
    }
}
