//! Vectorized on-policy data collection.
//!
//! E environments advance T steps per batch. Every stochastic draw for
//! environment `e` comes from its own counter-derived stream, so the batch
//! is bit-identical regardless of how environments are distributed over
//! worker threads; reductions are performed in environment order.

use rand_chacha::ChaCha8Rng;

use super::policy::{PolicyModel, ValueModel};
use super::PpoConfig;
use crate::diffusion::DenoiserModel;
use crate::env::features::{extract_features, frame_features, FEATURE_DIM};
use crate::env::{
    default_init_state, env_step, task_reward, Action, EnvParams, EnvState, Goal, TaskConfig,
};
use crate::error::Result;
use crate::prior::{composite_reward, ErrorAccumulator, SmpPrior};
use crate::rng::{stream, Domain};

/// One environment's persistent rollout state.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub state: EnvState,
    /// Last `window_frames` states, ending at `state`.
    pub history: Vec<EnvState>,
    pub goal: Goal,
    pub rng: ChaCha8Rng,
    pub episode_task_sum: f64,
}

impl EnvSlot {
    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }
}

pub struct RolloutContext<'a> {
    pub env: &'a EnvParams,
    pub task: &'a TaskConfig,
    pub prior: Option<&'a SmpPrior<DenoiserModel>>,
    pub cfg: &'a PpoConfig,
    pub window_frames: usize,
}

impl RolloutContext<'_> {
    pub fn obs_dim(&self) -> usize {
        FEATURE_DIM + self.task.kind.goal_dim()
    }

    pub fn use_gsi(&self) -> bool {
        self.cfg.use_gsi.unwrap_or(self.prior.is_some())
    }

    /// Reset a slot to a fresh episode start.
    pub fn reset_slot(&self, slot: &mut EnvSlot) -> Result<()> {
        if self.use_gsi() {
            let prior = self.prior.expect("generative initialization needs a prior");
            let init = prior.gsi_sample(self.env, self.cfg.spawn_half_extent, &mut slot.rng)?;
            slot.state = init.state;
            slot.history = init.history;
        } else {
            let state = default_init_state(&mut slot.rng);
            slot.state = state;
            slot.history = vec![state; self.window_frames];
        }
        slot.goal = Goal::initial(self.task, &slot.state, &mut slot.rng);
        slot.episode_task_sum = 0.0;
        Ok(())
    }

    pub fn make_slots(&self, seed: u64) -> Result<Vec<EnvSlot>> {
        let mut slots = Vec::with_capacity(self.cfg.envs);
        for e in 0..self.cfg.envs {
            let mut slot = EnvSlot {
                state: EnvState::at_rest(),
                history: vec![EnvState::at_rest(); self.window_frames],
                goal: Goal::None,
                rng: stream(seed, Domain::Action, e as u64),
                episode_task_sum: 0.0,
            };
            self.reset_slot(&mut slot)?;
            slots.push(slot);
        }
        Ok(slots)
    }
}

/// Flattened per-step storage for one batch, env-major: index `e * T + t`.
pub struct RolloutBatch {
    pub envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub r_smp: Vec<f64>,
    pub r_task: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap: Vec<f64>,
    pub accum: ErrorAccumulator,
    /// Mean per-step task reward of episodes completed during this batch.
    pub episode_task_returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn steps(&self) -> usize {
        self.envs * self.horizon
    }

    pub fn mean_r_smp(&self) -> f64 {
        self.r_smp.iter().sum::<f64>() / self.steps() as f64
    }

    pub fn mean_r_task(&self) -> f64 {
        self.r_task.iter().sum::<f64>() / self.steps() as f64
    }
}

pub fn build_obs(env: &EnvParams, state: &EnvState, goal: &Goal, out: &mut [f64]) {
    frame_features(env, state, state, &mut out[..FEATURE_DIM]);
    goal.features(state, &mut out[FEATURE_DIM..]);
}

struct SliceView<'a> {
    obs: &'a mut [f64],
    actions: &'a mut [f64],
    log_probs: &'a mut [f64],
    values: &'a mut [f64],
    r_smp: &'a mut [f64],
    r_task: &'a mut [f64],
    rewards: &'a mut [f64],
    dones: &'a mut [bool],
    bootstrap: &'a mut [f64],
}

/// Advance one environment for T steps, writing into its batch slice.
fn rollout_one(
    ctx: &RolloutContext<'_>,
    policy: &PolicyModel,
    value: &ValueModel,
    slot: &mut EnvSlot,
    view: &mut SliceView<'_>,
    accum: &mut ErrorAccumulator,
    episode_returns: &mut Vec<f64>,
) -> Result<()> {
    let obs_dim = ctx.obs_dim();
    let act_dim = policy.act_dim;
    let mut policy_trace = policy.make_trace();
    let mut value_trace = value.make_trace();
    let mut obs = vec![0.0; obs_dim];
    let mut action = vec![0.0; act_dim];
    let mut window_z = vec![0.0; ctx.window_frames * FEATURE_DIM];

    for t in 0..ctx.cfg.horizon {
        build_obs(ctx.env, &slot.state, &slot.goal, &mut obs);
        let v = value.value(&obs, &mut value_trace);
        let log_prob = policy.sample_action(&obs, &mut policy_trace, &mut slot.rng, &mut action);
        let next = env_step(ctx.env, &slot.state, &Action::from_slice(&action))?;

        let r_task = task_reward(ctx.task, &next, &slot.goal);
        slot.history.remove(0);
        slot.history.push(next);

        let r_smp = match ctx.prior {
            Some(prior) if ctx.cfg.w_prior > 0.0 => {
                let raw = extract_features(ctx.env, &slot.history);
                prior.model().normalize(&raw, &mut window_z);
                prior.reward(&window_z, &mut slot.rng, Some(accum))?.reward
            }
            _ => 0.0,
        };
        let reward = composite_reward(r_smp, r_task, ctx.cfg.w_prior, ctx.cfg.w_g);

        slot.episode_task_sum += r_task;
        let done = next.step >= ctx.env.episode_len;

        view.obs[t * obs_dim..(t + 1) * obs_dim].copy_from_slice(&obs);
        view.actions[t * act_dim..(t + 1) * act_dim].copy_from_slice(&action);
        view.log_probs[t] = log_prob;
        view.values[t] = v;
        view.r_smp[t] = r_smp;
        view.r_task[t] = r_task;
        view.rewards[t] = reward;
        view.dones[t] = done;

        if done {
            episode_returns.push(slot.episode_task_sum / ctx.env.episode_len as f64);
            ctx.reset_slot(slot)?;
        } else {
            slot.state = next;
            slot.goal = slot.goal.advance(ctx.task, &next, &mut slot.rng);
        }
    }

    build_obs(ctx.env, &slot.state, &slot.goal, &mut obs);
    view.bootstrap[0] = value.value(&obs, &mut value_trace);
    Ok(())
}

/// Collect a batch across all environments, fanning out over worker threads.
/// Results are independent of the thread count.
pub fn collect_rollouts(
    ctx: &RolloutContext<'_>,
    policy: &PolicyModel,
    value: &ValueModel,
    slots: &mut [EnvSlot],
) -> Result<RolloutBatch> {
    let envs = ctx.cfg.envs;
    assert_eq!(slots.len(), envs);
    let horizon = ctx.cfg.horizon;
    let obs_dim = ctx.obs_dim();
    let act_dim = policy.act_dim;

    let mut batch = RolloutBatch {
        envs,
        horizon,
        obs_dim,
        act_dim,
        obs: vec![0.0; envs * horizon * obs_dim],
        actions: vec![0.0; envs * horizon * act_dim],
        log_probs: vec![0.0; envs * horizon],
        values: vec![0.0; envs * horizon],
        r_smp: vec![0.0; envs * horizon],
        r_task: vec![0.0; envs * horizon],
        rewards: vec![0.0; envs * horizon],
        dones: vec![false; envs * horizon],
        bootstrap: vec![0.0; envs],
        accum: ErrorAccumulator::default(),
        episode_task_returns: Vec::new(),
    };

    // Carve the batch into disjoint per-env views.
    let mut views: Vec<SliceView<'_>> = {
        let mut obs_rest = batch.obs.as_mut_slice();
        let mut act_rest = batch.actions.as_mut_slice();
        let mut lp_rest = batch.log_probs.as_mut_slice();
        let mut val_rest = batch.values.as_mut_slice();
        let mut rs_rest = batch.r_smp.as_mut_slice();
        let mut rt_rest = batch.r_task.as_mut_slice();
        let mut rw_rest = batch.rewards.as_mut_slice();
        let mut dn_rest = batch.dones.as_mut_slice();
        let mut bs_rest = batch.bootstrap.as_mut_slice();
        let mut views = Vec::with_capacity(envs);
        for _ in 0..envs {
            let (obs, rest) = obs_rest.split_at_mut(horizon * obs_dim);
            obs_rest = rest;
            let (actions, rest) = act_rest.split_at_mut(horizon * act_dim);
            act_rest = rest;
            let (log_probs, rest) = lp_rest.split_at_mut(horizon);
            lp_rest = rest;
            let (values, rest) = val_rest.split_at_mut(horizon);
            val_rest = rest;
            let (r_smp, rest) = rs_rest.split_at_mut(horizon);
            rs_rest = rest;
            let (r_task, rest) = rt_rest.split_at_mut(horizon);
            rt_rest = rest;
            let (rewards, rest) = rw_rest.split_at_mut(horizon);
            rw_rest = rest;
            let (dones, rest) = dn_rest.split_at_mut(horizon);
            dn_rest = rest;
            let (bootstrap, rest) = bs_rest.split_at_mut(1);
            bs_rest = rest;
            views.push(SliceView {
                obs,
                actions,
                log_probs,
                values,
                r_smp,
                r_task,
                rewards,
                dones,
                bootstrap,
            });
        }
        views
    };

    let threads = if ctx.cfg.threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        ctx.cfg.threads
    }
    .min(envs)
    .max(1);

    // (accumulator, episode returns, result) per env, merged in env order.
    let mut per_env: Vec<(ErrorAccumulator, Vec<f64>, Result<()>)> = Vec::new();
    if threads == 1 {
        for (slot, view) in slots.iter_mut().zip(views.iter_mut()) {
            let mut acc = ErrorAccumulator::default();
            let mut eps = Vec::new();
            let res = rollout_one(ctx, policy, value, slot, view, &mut acc, &mut eps);
            per_env.push((acc, eps, res));
        }
    } else {
        let chunk = envs.div_ceil(threads);
        let slot_chunks: Vec<&mut [EnvSlot]> = slots.chunks_mut(chunk).collect();
        let view_chunks: Vec<&mut [SliceView<'_>]> = views.chunks_mut(chunk).collect();
        let outputs: Vec<Vec<(ErrorAccumulator, Vec<f64>, Result<()>)>> =
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for (slot_chunk, view_chunk) in slot_chunks.into_iter().zip(view_chunks) {
                    handles.push(scope.spawn(move || {
                        let mut out = Vec::with_capacity(slot_chunk.len());
                        for (slot, view) in slot_chunk.iter_mut().zip(view_chunk.iter_mut()) {
                            let mut acc = ErrorAccumulator::default();
                            let mut eps = Vec::new();
                            let res =
                                rollout_one(ctx, policy, value, slot, view, &mut acc, &mut eps);
                            out.push((acc, eps, res));
                        }
                        out
                    }));
                }
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect()
            });
        for chunk_out in outputs {
            per_env.extend(chunk_out);
        }
    }

    drop(views);
    for (acc, eps, res) in per_env {
        res?;
        batch.accum.merge(&acc);
        batch.episode_task_returns.extend(eps);
    }
    Ok(batch)
}

/// Roll one episode with the deterministic (mean) policy; returns the state
/// trajectory, per-step goals, and the mean per-step task reward.
pub fn eval_episode(
    ctx: &RolloutContext<'_>,
    policy: &PolicyModel,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<EnvState>, Vec<Goal>, f64)> {
    let mut slot = EnvSlot {
        state: EnvState::at_rest(),
        history: vec![EnvState::at_rest(); ctx.window_frames],
        goal: Goal::None,
        rng: rng.clone(),
        episode_task_sum: 0.0,
    };
    ctx.reset_slot(&mut slot)?;

    let mut policy_trace = policy.make_trace();
    let mut obs = vec![0.0; ctx.obs_dim()];
    let mut mean = vec![0.0; policy.act_dim];
    let mut states = Vec::with_capacity(ctx.env.episode_len as usize + 1);
    let mut goals = Vec::with_capacity(ctx.env.episode_len as usize);
    states.push(slot.state);
    let mut task_sum = 0.0;
    for _ in 0..ctx.env.episode_len {
        build_obs(ctx.env, &slot.state, &slot.goal, &mut obs);
        policy.mean_into(&obs, &mut policy_trace, &mut mean);
        let next = env_step(ctx.env, &slot.state, &Action::from_slice(&mean))?;
        task_sum += task_reward(ctx.task, &next, &slot.goal);
        goals.push(slot.goal);
        states.push(next);
        slot.goal = slot.goal.advance(ctx.task, &next, &mut slot.rng);
        slot.state = next;
    }
    // Keep the caller's stream in sync with the draws we consumed.
    *rng = slot.rng;
    Ok((states, goals, task_sum / ctx.env.episode_len as f64))
}
