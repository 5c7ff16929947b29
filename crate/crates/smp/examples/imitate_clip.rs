//! Single-clip imitation: train a prior on one reference clip, then train a
//! policy from the prior reward alone (no task reward, no dataset access)
//! and score it with DTW-aligned position error against the reference.
//!
//!     cargo run --release --example imitate_clip -- [iterations]

use smp::diffusion::{train_prior, StyleDirective, TrainPriorConfig};
use smp::env::dataset::{generate_gait_dataset, synth_clip, ClipMeta, DataPreset};
use smp::env::{EnvParams, TaskConfig, TaskKind};
use smp::eval::imitation_error;
use smp::ppo::{PolicyTrainer, PpoConfig, TrainPolicyConfig};
use smp::prior::{PriorConfig, SmpPrior};
use smp::rng::{stream, Domain};

fn main() -> smp::Result<()> {
    let iterations: usize =
        std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(300);
    let env = EnvParams::default();
    let seed = 3;
    let clip_speed = 2.0;

    let mut data_rng = stream(seed, Domain::Data, 0);
    let dataset = generate_gait_dataset(
        &env,
        &DataPreset::SingleClip { speed: clip_speed, clip_seconds: 4.0 },
        &mut data_rng,
    );
    println!("reference: one {:.0}-second clip at {clip_speed} m/s", 4.0);

    let prior_cfg = TrainPriorConfig {
        steps: 10_000,
        batch: 128,
        lr: 1e-3,
        holdout_every: 0,
        ..TrainPriorConfig::default()
    };
    let (model, _) = train_prior(&dataset, &prior_cfg, seed)?;
    let prior = SmpPrior::new(model, StyleDirective::Unconditional, PriorConfig::default())?;

    // Imitation uses the prior reward only.
    let ppo = PpoConfig { w_prior: 1.0, w_g: 0.0, ..PpoConfig::default() };
    let task = TaskConfig::new(TaskKind::Imitation);
    let mut trainer = PolicyTrainer::new(env.clone(), task, ppo, Some(prior), seed)?;

    let mut rows = Vec::new();
    trainer.run(
        &TrainPolicyConfig { iterations, eval_every: 0, eval_episodes: 4 },
        &mut rows,
    )?;
    println!(
        "trained {} iterations; final batch r_smp {:.3}",
        trainer.iter,
        rows.last().map(|r| r.mean_r_smp).unwrap_or(f64::NAN)
    );

    // Reference trajectory of the same duration as an evaluation episode.
    let reference = synth_clip(
        &env,
        &ClipMeta {
            style: 0,
            speed: clip_speed,
            duration: env.episode_len as f64 * env.dt,
            phase0: 0.0,
            turn_rate: 0.0,
        },
    );
    let episodes = trainer.evaluate(8, 12345)?;
    let mut errors = Vec::new();
    for ep in &episodes {
        errors.push(imitation_error(&env, &ep.states, &reference));
    }
    errors.sort_by(|a, b| a.total_cmp(b));
    println!("DTW position error over 8 episodes:");
    println!("  best {:.3} m, median {:.3} m, worst {:.3} m", errors[0], errors[4], errors[7]);
    Ok(())
}
