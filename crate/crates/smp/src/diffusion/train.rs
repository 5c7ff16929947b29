//! DDPM training with condition dropout and EMA tracking.

use rand::Rng;

use super::denoiser::{DenoiserConfig, DenoiserModel};
use super::schedule::{build_schedule, forward_diffuse_into};
use super::{EpsPredictor, StyleLabel};
use crate::env::dataset::GaitDataset;
use crate::error::{Result, SmpError};
use crate::nn::Adam;
use crate::rng::{fill_normal, stream, Domain};

#[derive(Debug, Clone)]
pub struct TrainPriorConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub ema_decay: f64,
    /// Probability of replacing the style label with the unconditional
    /// token during training, enabling classifier-free guidance later.
    pub cond_dropout: f64,
    pub hidden: Vec<usize>,
    pub film_dim: usize,
    pub time_embed_dim: usize,
    pub style_embed_dim: usize,
    pub diffusion_steps: usize,
    /// Abort when the loss stays above `divergence_factor * initial loss`
    /// for `divergence_patience` consecutive steps.
    pub divergence_factor: f64,
    pub divergence_patience: usize,
    pub log_every: usize,
    /// Every k-th window is held out of training for evaluation (0: none).
    pub holdout_every: usize,
}

impl Default for TrainPriorConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch: 256,
            lr: 3e-4,
            ema_decay: 0.999,
            cond_dropout: 0.1,
            hidden: vec![64, 64],
            film_dim: 32,
            time_embed_dim: 32,
            style_embed_dim: 16,
            diffusion_steps: 50,
            divergence_factor: 10.0,
            divergence_patience: 1000,
            log_every: 200,
            holdout_every: 10,
        }
    }
}

/// The train/held-out window split used by training and evaluation: every
/// k-th window index is held out.
pub fn holdout_split(window_count: usize, every: usize) -> (Vec<usize>, Vec<usize>) {
    if every == 0 {
        return ((0..window_count).collect(), Vec::new());
    }
    let mut train = Vec::with_capacity(window_count);
    let mut held = Vec::with_capacity(window_count / every + 1);
    for w in 0..window_count {
        if w % every == 0 {
            held.push(w);
        } else {
            train.push(w);
        }
    }
    (train, held)
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    /// `(step, mean loss over the logging interval)`.
    pub entries: Vec<(usize, f64)>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Mean DDPM loss of a predictor over the given z-normalized windows, with
/// fresh `(i, eps)` draws per window: `||eps - f(x_i, c)||^2`.
pub fn ddpm_loss(
    model: &impl EpsPredictor,
    windows_z: &[Vec<f64>],
    labels: &[StyleLabel],
    rng: &mut impl Rng,
) -> f64 {
    assert_eq!(windows_z.len(), labels.len());
    let dim = model.window_dim();
    let schedule = model.schedule();
    let mut eps = vec![0.0; dim];
    let mut x_i = vec![0.0; dim];
    let mut eps_hat = vec![0.0; dim];
    let mut total = 0.0;
    for (window, &label) in windows_z.iter().zip(labels.iter()) {
        let i = rng.gen_range(1..=schedule.n);
        fill_normal(rng, &mut eps);
        forward_diffuse_into(schedule, window, i, &eps, &mut x_i);
        model.predict(&x_i, i, label, &mut eps_hat);
        total += eps
            .iter()
            .zip(eps_hat.iter())
            .map(|(e, p)| (e - p) * (e - p))
            .sum::<f64>();
    }
    total / windows_z.len() as f64
}

/// Train a denoiser on the dataset. Returns the model (EMA weights included)
/// and the loss curve.
pub fn train_prior(
    dataset: &GaitDataset,
    cfg: &TrainPriorConfig,
    seed: u64,
) -> Result<(DenoiserModel, TrainLog)> {
    if dataset.windows.is_empty() {
        return Err(SmpError::Config("dataset has no windows".into()));
    }
    let (mean, std) = dataset.norm_stats();
    let dim = dataset.window_dim();

    let (train_idx, _) = holdout_split(dataset.windows.len(), cfg.holdout_every);
    if train_idx.is_empty() {
        return Err(SmpError::Config(
            "holdout split leaves no training windows".into(),
        ));
    }
    let mut windows_z: Vec<Vec<f64>> = Vec::with_capacity(train_idx.len());
    let mut labels: Vec<usize> = Vec::with_capacity(train_idx.len());
    for &w in &train_idx {
        windows_z.push(
            dataset.windows[w]
                .iter()
                .zip(mean.iter().zip(std.iter()))
                .map(|(v, (m, s))| (v - m) / s)
                .collect(),
        );
        labels.push(dataset.style_of_window(w) as usize);
    }

    let model_cfg = DenoiserConfig {
        hidden: cfg.hidden.clone(),
        film_dim: cfg.film_dim,
        time_embed_dim: cfg.time_embed_dim,
        style_embed_dim: cfg.style_embed_dim,
        diffusion_steps: cfg.diffusion_steps,
        ..DenoiserConfig::new(
            dataset.window_frames,
            dataset.feature_dim,
            dataset.style_count(),
        )
    };
    let schedule = build_schedule(cfg.diffusion_steps)?;
    let mut model = DenoiserModel::new(
        model_cfg,
        schedule,
        mean,
        std,
        dataset.style_names.clone(),
        seed,
        cfg.ema_decay,
    )?;

    let mut adam = Adam::new(model.params.values.len());
    let mut scope = model.make_train_scope();
    let mut rng = stream(seed, Domain::DiffusionTrain, 0);

    let mut eps = vec![0.0; dim];
    let mut x_i = vec![0.0; dim];
    let mut eps_hat = vec![0.0; dim];
    let mut out_grad = vec![0.0; dim];

    let mut log = TrainLog::default();
    let mut interval_sum = 0.0;
    let mut interval_count = 0usize;
    let mut high_loss_streak = 0usize;

    // Per-step residuals, measured over the final quarter of training, feed
    // the sampler's denoised-estimate weighting.
    let residual_from = cfg.steps - (cfg.steps / 4).max(1).min(cfg.steps);
    let mut residual_sums = vec![0.0; model.schedule.n + 1];
    let mut residual_counts = vec![0u64; model.schedule.n + 1];

    for step in 0..cfg.steps {
        scope.grads.fill(0.0);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch {
            let w = rng.gen_range(0..windows_z.len());
            let i = rng.gen_range(1..=model.schedule.n);
            let label = if rng.gen::<f64>() < cfg.cond_dropout {
                StyleLabel::Null
            } else {
                StyleLabel::Id(labels[w])
            };
            fill_normal(&mut rng, &mut eps);
            forward_diffuse_into(&model.schedule, &windows_z[w], i, &eps, &mut x_i);
            model.eps_with_params(
                &model.params.values,
                &x_i,
                i,
                label,
                &mut scope.ws,
                &mut eps_hat,
            );
            let mut sq = 0.0;
            for k in 0..dim {
                let d = eps_hat[k] - eps[k];
                sq += d * d;
                out_grad[k] = 2.0 * d / cfg.batch as f64;
            }
            batch_loss += sq;
            if step >= residual_from {
                residual_sums[i] += sq / dim as f64;
                residual_counts[i] += 1;
            }
            model.backward_into(&model.params.values, label, &out_grad, &mut scope);
        }
        batch_loss /= cfg.batch as f64;
        if !batch_loss.is_finite() {
            return Err(SmpError::Training {
                step: step as u64,
                message: "non-finite DDPM loss".into(),
            });
        }

        if step == 0 {
            log.initial_loss = batch_loss;
        }
        if batch_loss > cfg.divergence_factor * log.initial_loss {
            high_loss_streak += 1;
            if high_loss_streak >= cfg.divergence_patience {
                return Err(SmpError::Training {
                    step: step as u64,
                    message: format!(
                        "diverged: loss {batch_loss:.3} > {}x initial {:.3}",
                        cfg.divergence_factor, log.initial_loss
                    ),
                });
            }
        } else {
            high_loss_streak = 0;
        }

        let values = &mut model.params.values;
        adam.step(values, &scope.grads, cfg.lr)?;
        model.ema.update(values);

        interval_sum += batch_loss;
        interval_count += 1;
        if (step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps {
            log.entries
                .push((step + 1, interval_sum / interval_count as f64));
            interval_sum = 0.0;
            interval_count = 0;
        }
        log.final_loss = batch_loss;
    }

    let overall = {
        let total: f64 = residual_sums.iter().sum();
        let count: u64 = residual_counts.iter().sum();
        if count > 0 {
            total / count as f64
        } else {
            0.0
        }
    };
    for i in 1..=model.schedule.n {
        model.step_residual[i] = if residual_counts[i] > 0 {
            residual_sums[i] / residual_counts[i] as f64
        } else {
            overall
        };
    }
    Ok((model, log))
}
