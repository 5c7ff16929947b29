//! Ensemble-versus-random reward variance ablation.

use rand::Rng;

use crate::diffusion::{EpsPredictor, StyleDirective};
use crate::error::Result;
use crate::prior::{PriorConfig, SmpPrior, TimestepMode};

#[derive(Debug, Clone)]
pub struct AblationReport {
    /// Reward standard deviation per test window, one entry per window.
    pub std_ensemble: Vec<f64>,
    pub std_random: Vec<f64>,
    pub mean_reward_ensemble: f64,
    pub mean_reward_random: f64,
    /// Fraction of windows where the ensemble std is strictly lower.
    pub ensemble_lower_fraction: f64,
}

/// Evaluate the reward repeatedly on fixed windows under both timestep
/// modes. Both priors share the model and are warmed on the same windows.
pub fn ablation_ensemble_vs_random<P: EpsPredictor + Clone>(
    model: &P,
    directive: &StyleDirective,
    windows_z: &[Vec<f64>],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<AblationReport> {
    assert!(!windows_z.is_empty());
    let mut ensemble = SmpPrior::new(
        model.clone(),
        directive.clone(),
        PriorConfig {
            mode: TimestepMode::Ensemble,
            ..PriorConfig::default()
        },
    )?;
    let mut random = SmpPrior::new(
        model.clone(),
        directive.clone(),
        PriorConfig {
            mode: TimestepMode::SingleRandom,
            ..PriorConfig::default()
        },
    )?;
    ensemble.warmup_stats(windows_z, rng)?;
    random.warmup_stats(windows_z, rng)?;

    let mut report = AblationReport {
        std_ensemble: Vec::with_capacity(windows_z.len()),
        std_random: Vec::with_capacity(windows_z.len()),
        mean_reward_ensemble: 0.0,
        mean_reward_random: 0.0,
        ensemble_lower_fraction: 0.0,
    };
    let mut lower = 0usize;
    fn stats<P: EpsPredictor>(
        prior: &SmpPrior<P>,
        window: &[f64],
        trials: usize,
        rng: &mut impl Rng,
    ) -> Result<(f64, f64)> {
        let mut rewards = Vec::with_capacity(trials);
        for _ in 0..trials {
            rewards.push(prior.reward(window, rng, None)?.reward);
        }
        let mean = rewards.iter().sum::<f64>() / trials as f64;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / trials as f64;
        Ok((mean, var.sqrt()))
    }
    for window in windows_z {
        let (me, se) = stats(&ensemble, window, trials, rng)?;
        let (mr, sr) = stats(&random, window, trials, rng)?;
        if se < sr {
            lower += 1;
        }
        report.std_ensemble.push(se);
        report.std_random.push(sr);
        report.mean_reward_ensemble += me;
        report.mean_reward_random += mr;
    }
    let n = windows_z.len() as f64;
    report.mean_reward_ensemble /= n;
    report.mean_reward_random /= n;
    report.ensemble_lower_fraction = lower as f64 / n;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_schedule, NoiseSchedule, StyleLabel};
    use crate::rng::{stream, Domain};

    /// Exact-noise predictor: both modes give reward 1 with zero spread.
    #[derive(Clone)]
    struct EchoZero {
        schedule: NoiseSchedule,
        dim: usize,
    }

    impl EpsPredictor for EchoZero {
        fn window_dim(&self) -> usize {
            self.dim
        }
        fn schedule(&self) -> &NoiseSchedule {
            &self.schedule
        }
        fn predict(&self, x: &[f64], i: usize, _style: StyleLabel, out: &mut [f64]) {
            let ab = self.schedule.alpha_bar(i);
            for (o, xi) in out.iter_mut().zip(x.iter()) {
                *o = xi / (1.0 - ab).sqrt();
            }
        }
    }

    /// Noise scaled per timestep: spread in both modes, less under the
    /// ensemble.
    #[derive(Clone)]
    struct Scaled {
        schedule: NoiseSchedule,
        dim: usize,
    }

    impl EpsPredictor for Scaled {
        fn window_dim(&self) -> usize {
            self.dim
        }
        fn schedule(&self) -> &NoiseSchedule {
            &self.schedule
        }
        fn predict(&self, x: &[f64], i: usize, _style: StyleLabel, out: &mut [f64]) {
            let ab = self.schedule.alpha_bar(i);
            let gain = 1.0 + 0.1 + 0.004 * i as f64;
            for (o, xi) in out.iter_mut().zip(x.iter()) {
                *o = gain * xi / (1.0 - ab).sqrt();
            }
        }
    }

    #[test]
    fn exact_predictor_gives_unit_reward_and_zero_spread_in_both_modes() {
        let model = EchoZero {
            schedule: build_schedule(50).unwrap(),
            dim: 8,
        };
        let windows: Vec<Vec<f64>> = (0..4).map(|_| vec![0.0; 8]).collect();
        let mut rng = stream(0, Domain::Reward, 9);
        let report = ablation_ensemble_vs_random(
            &model,
            &StyleDirective::Unconditional,
            &windows,
            20,
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.mean_reward_ensemble, 1.0);
        assert_eq!(report.mean_reward_random, 1.0);
        assert!(report.std_ensemble.iter().all(|&s| s == 0.0));
        assert!(report.std_random.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn ensemble_variance_is_lower_on_most_windows() {
        let model = Scaled {
            schedule: build_schedule(50).unwrap(),
            dim: 16,
        };
        let windows: Vec<Vec<f64>> = (0..20).map(|_| vec![0.0; 16]).collect();
        let mut rng = stream(1, Domain::Reward, 9);
        let report = ablation_ensemble_vs_random(
            &model,
            &StyleDirective::Unconditional,
            &windows,
            100,
            &mut rng,
        )
        .unwrap();
        assert!(
            report.ensemble_lower_fraction >= 0.95,
            "fraction {}",
            report.ensemble_lower_fraction
        );
    }

    #[test]
    fn singleton_timestep_set_degenerates_to_a_fixed_timestep() {
        // With |K| = 1 the ensemble is just the deterministic-timestep mode.
        let model = Scaled {
            schedule: build_schedule(50).unwrap(),
            dim: 8,
        };
        let mut prior = SmpPrior::new(
            model,
            StyleDirective::Unconditional,
            PriorConfig {
                mode: TimestepMode::Ensemble,
                ..PriorConfig::default()
            },
        )
        .unwrap();
        prior.force_timesteps(vec![22]);
        let window = vec![0.0; 8];
        let mut rng = stream(2, Domain::Reward, 9);
        prior.warmup_stats(&[window.clone()], &mut rng).unwrap();
        let sample = prior.reward(&window, &mut rng, None).unwrap();
        assert_eq!(sample.errors.len(), 1);
        assert_eq!(sample.errors[0].0, 22);
    }
}
