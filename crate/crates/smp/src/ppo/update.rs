//! Clipped-surrogate policy and value updates.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::gae::normalize_advantages;
use super::policy::{clip_grad_norm, PolicyModel, ValueModel};
use super::rollout::RolloutBatch;
use super::PpoConfig;
use crate::error::Result;
use crate::nn::Adam;

#[derive(Debug, Clone, Default)]
pub struct UpdateDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub epochs_run: usize,
    /// Set when the KL limit stopped the epoch loop early.
    pub early_stopped: bool,
}

/// One PPO update over a collected batch. Advantages are normalized across
/// the batch before the policy loss; the value net regresses on TD(lambda)
/// targets; both gradient vectors are clipped to unit L2 norm.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut PolicyModel,
    value: &mut ValueModel,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    batch: &RolloutBatch,
    advantages_raw: &[f64],
    targets: &[f64],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateDiagnostics> {
    let steps = batch.steps();
    assert_eq!(advantages_raw.len(), steps);
    assert_eq!(targets.len(), steps);

    let mut advantages = advantages_raw.to_vec();
    normalize_advantages(&mut advantages);

    let mut indices: Vec<usize> = (0..steps).collect();
    let minibatch = cfg.minibatch.min(steps).max(1);

    let mut policy_trace = policy.make_trace();
    let mut value_trace = value.make_trace();
    let mut policy_grads = vec![0.0; policy.params.values.len()];
    let mut value_grads = vec![0.0; value.params.values.len()];
    let mut mean = vec![0.0; batch.act_dim];

    let mut diag = UpdateDiagnostics::default();
    let mut kl_sum = 0.0;
    let mut kl_count = 0usize;
    let mut clip_hits = 0usize;
    let mut sample_count = 0usize;
    let mut loss_pi_sum = 0.0;
    let mut loss_v_sum = 0.0;

    'epochs: for _epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(minibatch) {
            policy_grads.fill(0.0);
            value_grads.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut chunk_kl = 0.0;
            for &idx in chunk {
                let obs = &batch.obs[idx * batch.obs_dim..(idx + 1) * batch.obs_dim];
                let action = &batch.actions[idx * batch.act_dim..(idx + 1) * batch.act_dim];
                let adv = advantages[idx];

                let log_prob_new = policy.log_prob(obs, action, &mut policy_trace);
                policy_trace_mean(policy, &mut mean, &policy_trace);
                let ratio = (log_prob_new - batch.log_probs[idx]).exp();
                let clipped_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let unclipped = ratio * adv;
                let clipped = clipped_ratio * adv;
                loss_pi_sum -= unclipped.min(clipped);
                if (ratio - 1.0).abs() > cfg.clip {
                    clip_hits += 1;
                }
                chunk_kl += (ratio - 1.0) - (log_prob_new - batch.log_probs[idx]);

                // d(-min)/d log_prob: the surrogate only moves when the
                // unclipped branch is active.
                let g = if unclipped <= clipped {
                    -adv * ratio
                } else {
                    0.0
                };
                policy.accumulate_grads(
                    action,
                    &mean,
                    g * scale,
                    -cfg.entropy_coef * scale,
                    &mut policy_trace,
                    &mut policy_grads,
                );

                let v = value.value(obs, &mut value_trace);
                let err = v - targets[idx];
                loss_v_sum += err * err;
                value.accumulate_grads(2.0 * err * scale, &mut value_trace, &mut value_grads);
            }
            sample_count += chunk.len();
            kl_sum += chunk_kl;
            kl_count += chunk.len();

            clip_grad_norm(&mut policy_grads, cfg.grad_clip);
            clip_grad_norm(&mut value_grads, cfg.grad_clip);
            policy_opt.step(&mut policy.params.values, &policy_grads, cfg.lr)?;
            policy.clamp_log_std();
            value_opt.step(&mut value.params.values, &value_grads, cfg.lr)?;

            if kl_count > 0 && kl_sum / kl_count as f64 > cfg.kl_limit {
                diag.early_stopped = true;
                diag.epochs_run = _epoch + 1;
                break 'epochs;
            }
        }
        diag.epochs_run = _epoch + 1;
    }

    diag.approx_kl = if kl_count > 0 {
        kl_sum / kl_count as f64
    } else {
        0.0
    };
    diag.clip_fraction = if sample_count > 0 {
        clip_hits as f64 / sample_count as f64
    } else {
        0.0
    };
    diag.policy_loss = if sample_count > 0 {
        loss_pi_sum / sample_count as f64
    } else {
        0.0
    };
    diag.value_loss = if sample_count > 0 {
        loss_v_sum / sample_count as f64
    } else {
        0.0
    };
    diag.entropy = policy.entropy();
    if !diag.approx_kl.is_finite() || !diag.value_loss.is_finite() {
        return Err(crate::SmpError::Training {
            step: policy_opt.step_count(),
            message: "non-finite update diagnostics".into(),
        });
    }
    Ok(diag)
}

/// The policy mean of the most recent forward is the trace output.
fn policy_trace_mean(_policy: &PolicyModel, mean: &mut [f64], trace: &crate::nn::Trace) {
    mean.copy_from_slice(trace.output());
}
