//! Gaussian policy and value networks.
//!
//! The policy maps `(state features, goal)` to a per-dimension Gaussian
//! mean through a tanh MLP; log standard deviations are state-independent
//! parameters clamped to [-4, 1]. Actions are sampled unbounded and clamped
//! to [-1, 1] at the environment boundary (log-probs are of the raw
//! Gaussian).

use rand::Rng;

use crate::error::Result;
use crate::nn::{Activation, Block, Manifest, Mlp, MlpSpec, ParamSet, Trace};
use crate::rng::normal;

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;
pub const LOG_STD_INIT: f64 = -0.5;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone)]
pub struct PolicyModel {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub params: ParamSet,
    mlp: Mlp,
}

impl PolicyModel {
    pub fn manifest(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Manifest {
        let mut layers: Vec<(usize, Activation)> =
            hidden.iter().map(|&w| (w, Activation::Tanh)).collect();
        layers.push((act_dim, Activation::Linear));
        Manifest::new(vec![
            Block::Mlp(MlpSpec::new(obs_dim, layers, 0)),
            Block::Table {
                rows: 1,
                cols: act_dim,
            },
        ])
    }

    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let manifest = Self::manifest(obs_dim, act_dim, hidden);
        let mut params = ParamSet::init(manifest, rng);
        // Small final layer for stable early updates.
        let spec = match &params.manifest.blocks[0] {
            Block::Mlp(s) => s.clone(),
            _ => unreachable!(),
        };
        let last_in = if hidden.is_empty() {
            obs_dim
        } else {
            hidden[hidden.len() - 1]
        };
        let last_params = (last_in + 1) * act_dim;
        let mlp_len = spec.param_count();
        for v in params.values[mlp_len - last_params..mlp_len].iter_mut() {
            *v *= 0.01;
        }
        for v in params.block_slice_mut(1).iter_mut() {
            *v = LOG_STD_INIT;
        }
        Self {
            obs_dim,
            act_dim,
            params,
            mlp: Mlp::new(spec),
        }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let spec = match &params.manifest.blocks[0] {
            Block::Mlp(s) => s.clone(),
            _ => {
                return Err(crate::SmpError::Format(
                    "policy checkpoint has no MLP block".into(),
                ))
            }
        };
        let act_dim = match params.manifest.blocks.get(1) {
            Some(Block::Table { rows: 1, cols }) => *cols,
            _ => {
                return Err(crate::SmpError::Format(
                    "policy checkpoint has no log-std table".into(),
                ))
            }
        };
        Ok(Self {
            obs_dim: spec.input,
            act_dim,
            params,
            mlp: Mlp::new(spec),
        })
    }

    pub fn make_trace(&self) -> Trace {
        self.mlp.make_trace()
    }

    pub fn mean_into(&self, obs: &[f64], trace: &mut Trace, out: &mut [f64]) {
        let y = self
            .mlp
            .forward(self.params.block_slice(0), obs, None, trace)
            .expect("policy shapes are fixed");
        out.copy_from_slice(y);
    }

    pub fn log_std(&self, k: usize) -> f64 {
        self.params.block_slice(1)[k].clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    /// Clamp the stored log-std parameters into their legal band.
    pub fn clamp_log_std(&mut self) {
        for v in self.params.block_slice_mut(1).iter_mut() {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Sample an action and return its log-probability.
    pub fn sample_action(
        &self,
        obs: &[f64],
        trace: &mut Trace,
        rng: &mut impl Rng,
        action: &mut [f64],
    ) -> f64 {
        let mut mean = vec![0.0; self.act_dim];
        self.mean_into(obs, trace, &mut mean);
        let mut log_prob = 0.0;
        for k in 0..self.act_dim {
            let log_std = self.log_std(k);
            let std = log_std.exp();
            let z: f64 = normal(rng);
            action[k] = mean[k] + std * z;
            log_prob += -0.5 * z * z - log_std - HALF_LN_TWO_PI;
        }
        log_prob
    }

    /// Log-probability of `action` under the current parameters, reusing the
    /// forward activations left in `trace` for the gradient path.
    pub fn log_prob(&self, obs: &[f64], action: &[f64], trace: &mut Trace) -> f64 {
        let mut mean = vec![0.0; self.act_dim];
        self.mean_into(obs, trace, &mut mean);
        let mut log_prob = 0.0;
        for k in 0..self.act_dim {
            let log_std = self.log_std(k);
            let std = log_std.exp();
            let z = (action[k] - mean[k]) / std;
            log_prob += -0.5 * z * z - log_std - HALF_LN_TWO_PI;
        }
        log_prob
    }

    /// Gaussian entropy (state independent).
    pub fn entropy(&self) -> f64 {
        (0..self.act_dim)
            .map(|k| self.log_std(k) + HALF_LN_TWO_PI + 0.5)
            .sum()
    }

    /// Accumulate parameter gradients for `coef *  d log_prob / d theta`
    /// plus `ent_coef * d entropy / d theta`, given the trace of the last
    /// `log_prob` call on this sample.
    pub fn accumulate_grads(
        &self,
        action: &[f64],
        mean: &[f64],
        coef: f64,
        ent_coef: f64,
        trace: &mut Trace,
        grads: &mut [f64],
    ) {
        let mlp_len = self.mlp.spec.param_count();
        let mut mean_grad = vec![0.0; self.act_dim];
        for k in 0..self.act_dim {
            let log_std = self.log_std(k);
            let inv_var = (-2.0 * log_std).exp();
            let diff = action[k] - mean[k];
            // d log_prob / d mean_k.
            mean_grad[k] = coef * diff * inv_var;
            // d log_prob / d log_std_k plus the entropy term.
            let z2 = diff * diff * inv_var;
            grads[mlp_len + k] += coef * (z2 - 1.0) + ent_coef;
        }
        self.mlp
            .backward(
                self.params.block_slice(0),
                trace,
                &mean_grad,
                &mut grads[..mlp_len],
                None,
                None,
            )
            .expect("policy shapes are fixed");
    }
}

#[derive(Debug, Clone)]
pub struct ValueModel {
    pub obs_dim: usize,
    pub params: ParamSet,
    mlp: Mlp,
}

impl ValueModel {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers: Vec<(usize, Activation)> =
            hidden.iter().map(|&w| (w, Activation::Tanh)).collect();
        layers.push((1, Activation::Linear));
        let manifest = Manifest::new(vec![Block::Mlp(MlpSpec::new(obs_dim, layers, 0))]);
        let params = ParamSet::init(manifest, rng);
        let spec = match &params.manifest.blocks[0] {
            Block::Mlp(s) => s.clone(),
            _ => unreachable!(),
        };
        Self {
            obs_dim,
            params,
            mlp: Mlp::new(spec),
        }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let spec = match &params.manifest.blocks[0] {
            Block::Mlp(s) => s.clone(),
            _ => {
                return Err(crate::SmpError::Format(
                    "value checkpoint has no MLP block".into(),
                ))
            }
        };
        Ok(Self {
            obs_dim: spec.input,
            params,
            mlp: Mlp::new(spec),
        })
    }

    pub fn make_trace(&self) -> Trace {
        self.mlp.make_trace()
    }

    pub fn value(&self, obs: &[f64], trace: &mut Trace) -> f64 {
        self.mlp
            .forward(self.params.block_slice(0), obs, None, trace)
            .expect("value shapes are fixed")[0]
    }

    /// Accumulate gradients of `coef * V(obs)` given the trace of the last
    /// `value` call on this sample.
    pub fn accumulate_grads(&self, coef: f64, trace: &mut Trace, grads: &mut [f64]) {
        self.mlp
            .backward(
                self.params.block_slice(0),
                trace,
                &[coef],
                grads,
                None,
                None,
            )
            .expect("value shapes are fixed");
    }
}

/// Clip a gradient vector to a maximum L2 norm; returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
