//! Blend two styles into a new prior in eps-space and train a policy on the
//! result: limb 1 swings like highknees while limb 2 is held like zombie —
//! a combination that exists nowhere in the reference data.
//!
//!     cargo run --release --example compose_styles -- out/prior.smpl [iterations]
//!
//! The prior checkpoint comes from the `train_prior` example.

use smp::diffusion::{limb_split_masks, DenoiserModel, StyleDirective};
use smp::env::{EnvParams, TaskConfig, TaskKind};
use smp::eval::classify_trajectory;
use smp::ppo::{PolicyTrainer, PpoConfig, TrainPolicyConfig};
use smp::prior::{PriorConfig, SmpPrior};

fn main() -> smp::Result<()> {
    let prior_path = std::env::args().nth(1).unwrap_or_else(|| "out/prior.smpl".into());
    let iterations: usize =
        std::env::args().nth(2).and_then(|v| v.parse().ok()).unwrap_or(400);

    let model = DenoiserModel::load(std::path::Path::new(&prior_path))?;
    let find = |name: &str| model.style_names.iter().position(|n| n == name).unwrap();
    let (style_a, style_b) = (find("highknees"), find("zombie"));
    let (mask_a, mask_b) = limb_split_masks(model.config.window_frames);
    let directive = StyleDirective::Composed { style_a, style_b, mask_a, mask_b };
    let prior = SmpPrior::new(model, directive, PriorConfig::default())?;

    let env = EnvParams::default();
    // Moderate speeds keep the large highknees swing within torque limits.
    let task = TaskConfig {
        speed_range: (1.5, 4.0),
        ..TaskConfig::new(TaskKind::TargetSpeed)
    };
    let mut trainer = PolicyTrainer::new(env.clone(), task, PpoConfig::default(), Some(prior), 41)?;

    let mut rows = Vec::new();
    trainer.run(
        &TrainPolicyConfig { iterations, eval_every: 0, eval_episodes: 4 },
        &mut rows,
    )?;
    let last = rows.last().unwrap();
    println!(
        "trained {} iterations: batch task reward {:.3}, r_smp {:.3}",
        trainer.iter, last.task_return, last.mean_r_smp
    );

    let episodes = trainer.evaluate(16, 999)?;
    let mut per_limb = [[0usize; 3], [0usize; 3]];
    for ep in &episodes {
        let settle = ep.states.len() / 3;
        let verdict = classify_trajectory(&ep.states[settle..], 1.0 / env.dt);
        for limb in 0..2 {
            per_limb[limb][verdict.per_limb_style[limb]] += 1;
        }
    }
    println!("per-limb style verdicts over 16 evaluation rollouts:");
    println!("  limb 1 (wants highknees): {:?}", per_limb[0]);
    println!("  limb 2 (wants zombie):    {:?}", per_limb[1]);
    println!("  (counts are [neutral, highknees, zombie])");
    Ok(())
}
