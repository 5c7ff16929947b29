//! Generalized advantage estimation and TD(lambda) value targets.

/// GAE over one environment's trajectory. `values` carries T+1 entries (the
/// last is the bootstrap value); `dones[t]` marks transitions into a reset.
///
/// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}` with
/// `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let t_len = rewards.len();
    assert_eq!(
        values.len(),
        t_len + 1,
        "values must include the bootstrap entry"
    );
    assert_eq!(dones.len(), t_len);
    let mut advantages = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * not_done - values[t];
        carry = delta + gamma * lambda * not_done * carry;
        advantages[t] = carry;
    }
    advantages
}

/// TD(lambda) regression targets: unnormalized advantages plus the values.
pub fn td_lambda_targets(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    compute_gae(rewards, values, dones, gamma, lambda)
        .iter()
        .zip(values.iter())
        .map(|(a, v)| a + v)
        .collect()
}

/// Normalize advantages to zero mean and unit standard deviation in place.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    if advantages.is_empty() {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1e-8);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn random_instance(seed: u64, t_len: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let mut rng = stream(seed, Domain::Shuffle, 0);
        let rewards: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..=t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..t_len).map(|_| rng.gen_bool(0.1)).collect();
        (rewards, values, dones)
    }

    #[test]
    fn lambda_zero_collapses_to_one_step_deltas() {
        let (rewards, values, dones) = random_instance(1, 32);
        let adv = compute_gae(&rewards, &values, &dones, 0.97, 0.0);
        for t in 0..rewards.len() {
            let not_done = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + 0.97 * values[t + 1] * not_done - values[t];
            assert!((adv[t] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_zero_is_reward_minus_value() {
        let (rewards, values, dones) = random_instance(2, 16);
        let adv = compute_gae(&rewards, &values, &dones, 0.0, 0.95);
        for t in 0..rewards.len() {
            assert!((adv[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_one_matches_brute_force_discounted_residual() {
        // Without dones, A_t = sum_k gamma^k r_{t+k} + gamma^{T-t} V_T - V_t.
        let mut rng = stream(3, Domain::Shuffle, 0);
        let t_len = 24;
        let rewards: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..=t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dones = vec![false; t_len];
        let gamma = 0.93;
        let adv = compute_gae(&rewards, &values, &dones, gamma, 1.0);
        for t in 0..t_len {
            let mut ret = 0.0;
            for (k, r) in rewards[t..].iter().enumerate() {
                ret += gamma.powi(k as i32) * r;
            }
            ret += gamma.powi((t_len - t) as i32) * values[t_len];
            let expect = ret - values[t];
            assert!(
                (adv[t] - expect).abs() < 1e-12,
                "t={t}: {} vs {expect}",
                adv[t]
            );
        }
    }

    #[test]
    fn lambda_one_with_terminal_is_the_episode_return() {
        // Episode ends at T (done), V = 0: targets equal discounted returns.
        let mut rng = stream(4, Domain::Shuffle, 0);
        let t_len = 12;
        let rewards: Vec<f64> = (0..t_len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let values = vec![0.0; t_len + 1];
        let mut dones = vec![false; t_len];
        dones[t_len - 1] = true;
        let gamma = 0.9;
        let targets = td_lambda_targets(&rewards, &values, &dones, gamma, 1.0);
        for t in 0..t_len {
            let mut ret = 0.0;
            for (k, r) in rewards[t..].iter().enumerate() {
                ret += gamma.powi(k as i32) * r;
            }
            assert!((targets[t] - ret).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_targets_are_one_step_bootstraps() {
        let (rewards, values, dones) = random_instance(5, 20);
        let targets = td_lambda_targets(&rewards, &values, &dones, 0.99, 0.0);
        for t in 0..rewards.len() {
            let not_done = if dones[t] { 0.0 } else { 1.0 };
            let expect = rewards[t] + 0.99 * values[t + 1] * not_done;
            assert!((targets[t] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn targets_minus_values_equal_unnormalized_advantages() {
        for seed in 0..5 {
            let (rewards, values, dones) = random_instance(seed + 10, 40);
            for lambda in [0.0, 0.37, 0.95, 1.0] {
                let adv = compute_gae(&rewards, &values, &dones, 0.99, lambda);
                let targets = td_lambda_targets(&rewards, &values, &dones, 0.99, lambda);
                for t in 0..rewards.len() {
                    assert!((targets[t] - values[t] - adv[t]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalization_yields_zero_mean_unit_std() {
        let (rewards, values, dones) = random_instance(6, 64);
        let mut adv = compute_gae(&rewards, &values, &dones, 0.99, 0.95);
        normalize_advantages(&mut adv);
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / adv.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }
}
