//! Train a target-speed policy against a frozen walk-jog-run prior, then
//! sweep held-out target speeds and report tracking error and gait
//! frequency. The prior is trained here from three one-second clips; the
//! policy never touches that data.
//!
//!     cargo run --release --example train_target_speed -- [iterations]

use smp::diffusion::{train_prior, StyleDirective, TrainPriorConfig};
use smp::env::dataset::{generate_gait_dataset, stride_frequency, DataPreset};
use smp::env::{EnvParams, Goal, TaskConfig, TaskKind};
use smp::eval::classify_trajectory;
use smp::ppo::{PolicyTrainer, PpoConfig, TrainPolicyConfig};
use smp::prior::{PriorConfig, SmpPrior};
use smp::rng::{stream, Domain};

fn main() -> smp::Result<()> {
    let iterations: usize =
        std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(400);
    let env = EnvParams::default();
    let seed = 7;

    let mut data_rng = stream(seed, Domain::Data, 0);
    let dataset = generate_gait_dataset(&env, &DataPreset::WalkJogRun, &mut data_rng);
    println!("reference data: {} windows from 3 clips (3 s total)", dataset.windows.len());

    let prior_cfg = TrainPriorConfig {
        steps: 12_000,
        batch: 128,
        lr: 1e-3,
        cond_dropout: 0.25,
        holdout_every: 0,
        ..TrainPriorConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (model, log) = train_prior(&dataset, &prior_cfg, seed)?;
    println!("prior trained in {:.0?} (loss {:.1} -> {:.1})", t0.elapsed(), log.initial_loss, log.final_loss);

    let prior = SmpPrior::new(model, StyleDirective::Unconditional, PriorConfig::default())?;
    let task = TaskConfig::new(TaskKind::TargetSpeed);
    let ppo = PpoConfig::default();
    let mut trainer = PolicyTrainer::new(env.clone(), task, ppo, Some(prior), seed)?;

    let run = TrainPolicyConfig { iterations, eval_every: 0, eval_episodes: 8 };
    let t0 = std::time::Instant::now();
    let mut rows = Vec::new();
    let chunk = 50.min(iterations.max(1));
    while trainer.iter < iterations {
        let step_cfg = TrainPolicyConfig {
            iterations: chunk.min(iterations - trainer.iter),
            ..run.clone()
        };
        trainer.run(&step_cfg, &mut rows)?;
        let last = rows.last().unwrap();
        let eval = trainer.eval_task_return(8, trainer.iter as u64)?;
        println!(
            "iter {:>4}: batch task reward {:.3}, r_smp {:.3}, eval return {:.3}, kl {:.4}",
            last.iter, last.task_return, last.mean_r_smp, eval, last.kl
        );
    }
    println!("policy trained in {:.0?}", t0.elapsed());

    println!("\nheld-out speed sweep (deterministic policy):");
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "v*", "mean v", "rel err", "limb f", "f(v)");
    for k in 0..10 {
        let v_star = 1.2 + k as f64 * (6.0 - 1.2) / 9.0;
        let eps = trainer.evaluate_with_goal(2, 900 + k as u64, Some(Goal::Speed(v_star)))?;
        let mut speed = 0.0;
        let mut freq = 0.0;
        for ep in &eps {
            let settle = ep.states.len() / 3;
            let states = &ep.states[settle..];
            speed += states.iter().map(|s| s.speed()).sum::<f64>() / states.len() as f64;
            freq += classify_trajectory(states, 1.0 / env.dt).limbs[0].frequency;
        }
        speed /= eps.len() as f64;
        freq /= eps.len() as f64;
        println!(
            "{v_star:>6.2} {speed:>9.2} {:>8.1}% {freq:>9.2} {:>9.2}",
            100.0 * (speed - v_star).abs() / v_star,
            stride_frequency(v_star)
        );
    }
    Ok(())
}
