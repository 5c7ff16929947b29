//! Train a motion diffusion prior on the 3-style gait dataset and report
//! its fidelity: sample quality against held-out windows (kernel MMD) and
//! style accuracy of guided samples.
//!
//!     cargo run --release --example train_prior -- out/prior.smpl

use smp::diffusion::{train_prior, TrainPriorConfig};
use smp::env::dataset::{generate_gait_dataset, DataPreset};
use smp::env::EnvParams;
use smp::eval::prior_report;
use smp::rng::{stream, Domain};

fn main() -> smp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/prior.smpl".into());
    if let Some(dir) = std::path::Path::new(&out).parent() {
        std::fs::create_dir_all(dir)?;
    }
    let env = EnvParams::default();
    let seed = 11;

    let mut rng = stream(seed, Domain::Data, 0);
    let dataset = generate_gait_dataset(&env, &DataPreset::parse("styles")?, &mut rng);
    println!("dataset: {} windows", dataset.windows.len());

    let cfg = TrainPriorConfig {
        steps: 20_000,
        batch: 128,
        lr: 1e-3,
        cond_dropout: 0.25,
        ..TrainPriorConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (model, log) = train_prior(&dataset, &cfg, seed)?;
    println!(
        "trained in {:.0?}: loss {:.1} -> {:.1}",
        t0.elapsed(),
        log.initial_loss,
        log.final_loss
    );

    let report = prior_report(&model, &dataset, cfg.holdout_every, 256, 1000, seed)?;
    println!("MMD(samples, held-out)  = {:.5}", report.mmd_model);
    println!("MMD(normal,  held-out)  = {:.5}", report.mmd_normal);
    for (style, acc) in &report.style_accuracy {
        println!("style accuracy {style:<10} = {acc:.3}");
    }
    println!(
        "reward discrimination: dataset {:.3} > perturbed {:.3} > noise {:.3}",
        report.mean_reward_dataset, report.mean_reward_perturbed, report.mean_reward_noise
    );

    model.save(std::path::Path::new(&out))?;
    println!("saved prior to {out}");
    Ok(())
}
