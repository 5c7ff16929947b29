//! On-policy training: rollouts, advantage estimation, clipped updates.

pub mod gae;
pub mod policy;
pub mod rollout;
pub mod train;
pub mod update;

pub use gae::{compute_gae, normalize_advantages, td_lambda_targets};
pub use policy::{PolicyModel, ValueModel};
pub use rollout::{collect_rollouts, eval_episode, EnvSlot, RolloutBatch, RolloutContext};
pub use train::{PolicyTrainer, TrainPolicyConfig};
pub use update::{ppo_update, UpdateDiagnostics};

use crate::error::{Result, SmpError};

/// PPO hyperparameters.
#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr: f64,
    pub envs: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub w_prior: f64,
    pub w_g: f64,
    pub kl_limit: f64,
    pub grad_clip: f64,
    pub hidden: Vec<usize>,
    /// None: use generative initialization exactly when a prior is present.
    pub use_gsi: Option<bool>,
    /// 0 selects the available hardware parallelism.
    pub threads: usize,
    pub spawn_half_extent: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            lr: 3e-4,
            envs: 64,
            horizon: 64,
            epochs: 4,
            minibatch: 512,
            entropy_coef: 0.005,
            w_prior: 0.5,
            w_g: 0.5,
            kl_limit: 0.5,
            grad_clip: 1.0,
            hidden: vec![64, 64],
            use_gsi: None,
            threads: 0,
            spawn_half_extent: 2.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(SmpError::Config(
                "gamma and lambda must lie in [0, 1]".into(),
            ));
        }
        if !(0.0 < self.clip && self.clip < 1.0) {
            return Err(SmpError::Config("clip ratio must lie in (0, 1)".into()));
        }
        if self.w_prior < 0.0 || self.w_g < 0.0 {
            return Err(SmpError::Config(
                "reward weights must be non-negative".into(),
            ));
        }
        if self.envs == 0 || self.horizon == 0 {
            return Err(SmpError::Config("envs and horizon must be positive".into()));
        }
        Ok(())
    }
}
