//! The end-to-end policy trainer.
//!
//! Each iteration collects a vectorized rollout batch (querying the frozen
//! prior for rewards along the way), commits the per-timestep error means
//! once, computes GAE advantages and TD(lambda) targets per environment
//! segment, and runs the clipped update. The trainer state — networks,
//! optimizers, environment slots, RNG positions, running means — serializes
//! to one checkpoint so training resumes bit-deterministically.

use std::io::Read;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::gae::{compute_gae, td_lambda_targets};
use super::policy::{PolicyModel, ValueModel};
use super::rollout::{collect_rollouts, eval_episode, EnvSlot, RolloutContext};
use super::update::ppo_update;
use super::PpoConfig;
use crate::diffusion::DenoiserModel;
use crate::env::features::WINDOW_FRAMES;
use crate::env::{EnvParams, EnvState, Goal, TaskConfig, TaskKind};
use crate::error::{Result, SmpError};
use crate::nn::{read_checkpoint, write_checkpoint, Adam};
use crate::prior::SmpPrior;
use crate::rng::{stream, Domain};
use crate::wire;

#[derive(Debug, Clone)]
pub struct TrainPolicyConfig {
    pub iterations: usize,
    /// Run a deterministic evaluation every this many iterations (0: never).
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for TrainPolicyConfig {
    fn default() -> Self {
        Self { iterations: 300, eval_every: 50, eval_episodes: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub iter: usize,
    pub env_steps: u64,
    /// Mean per-step task reward over episodes completed in this batch
    /// (carries the previous value when no episode finished).
    pub task_return: f64,
    pub mean_r_smp: f64,
    pub kl: f64,
    pub clip_frac: f64,
    /// Batch-mean normalized error per ensemble timestep.
    pub norm_errors: Vec<f64>,
    pub eval_task_return: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub states: Vec<EnvState>,
    pub goals: Vec<Goal>,
    pub task_return: f64,
}

pub struct PolicyTrainer {
    pub env: EnvParams,
    pub task: TaskConfig,
    pub ppo: PpoConfig,
    pub prior: Option<SmpPrior<DenoiserModel>>,
    pub policy: PolicyModel,
    pub value: ValueModel,
    policy_opt: Adam,
    value_opt: Adam,
    slots: Vec<EnvSlot>,
    shuffle_rng: ChaCha8Rng,
    pub iter: usize,
    pub env_steps: u64,
    pub seed: u64,
    pub initial_prior_digest: Option<String>,
}

impl PolicyTrainer {
    pub fn new(
        env: EnvParams,
        task: TaskConfig,
        ppo: PpoConfig,
        prior: Option<SmpPrior<DenoiserModel>>,
        seed: u64,
    ) -> Result<Self> {
        ppo.validate()?;
        if ppo.w_prior > 0.0 && prior.is_none() {
            return Err(SmpError::Config(
                "w_prior > 0 requires a prior checkpoint; set w_prior = 0 for task-only runs"
                    .into(),
            ));
        }
        if ppo.use_gsi == Some(true) && prior.is_none() {
            return Err(SmpError::Config(
                "generative initialization requires a prior".into(),
            ));
        }
        let obs_dim = crate::env::features::FEATURE_DIM + task.kind.goal_dim();
        let mut init_rng = stream(seed, Domain::Init, 1);
        let policy = PolicyModel::new(obs_dim, crate::env::ACTION_DIM, &ppo.hidden, &mut init_rng);
        let mut value_rng = stream(seed, Domain::Init, 2);
        let value = ValueModel::new(obs_dim, &ppo.hidden, &mut value_rng);
        let policy_opt = Adam::new(policy.params.values.len());
        let value_opt = Adam::new(value.params.values.len());
        let initial_prior_digest = prior.as_ref().map(|p| p.digest());

        let mut trainer = Self {
            env,
            task,
            ppo,
            prior,
            policy,
            value,
            policy_opt,
            value_opt,
            slots: Vec::new(),
            shuffle_rng: stream(seed, Domain::Shuffle, 0),
            iter: 0,
            env_steps: 0,
            seed,
            initial_prior_digest,
        };
        trainer.slots = {
            let ctx = trainer.context();
            ctx.make_slots(seed)?
        };
        trainer.warmup_running_means()?;
        Ok(trainer)
    }

    fn context(&self) -> RolloutContext<'_> {
        RolloutContext {
            env: &self.env,
            task: &self.task,
            prior: self.prior.as_ref(),
            cfg: &self.ppo,
            window_frames: WINDOW_FRAMES,
        }
    }

    /// Collect one batch with disjoint borrows of the trainer fields.
    fn collect_batch(&mut self) -> Result<super::rollout::RolloutBatch> {
        let ctx = RolloutContext {
            env: &self.env,
            task: &self.task,
            prior: self.prior.as_ref(),
            cfg: &self.ppo,
            window_frames: WINDOW_FRAMES,
        };
        collect_rollouts(&ctx, &self.policy, &self.value, &mut self.slots)
    }

    /// Initialize the running means from one stats-only rollout batch so the
    /// first training iteration already sees normalized errors.
    fn warmup_running_means(&mut self) -> Result<()> {
        if self.prior.is_none() || self.ppo.w_prior == 0.0 || self.iter > 0 {
            return Ok(());
        }
        let batch = self.collect_batch()?;
        if let Some(prior) = self.prior.as_mut() {
            prior.commit_stats(&batch.accum);
        }
        Ok(())
    }

    /// One training iteration. Returns the metrics row.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let batch = self.collect_batch()?;
        let mut norm_errors = Vec::new();
        if let Some(prior) = self.prior.as_mut() {
            prior.commit_stats(&batch.accum);
            for &i in prior.timesteps() {
                norm_errors.push(prior.running_mean(i).unwrap_or(f64::NAN));
            }
        }

        // Advantages and targets per environment segment.
        let steps = batch.steps();
        let mut advantages = vec![0.0; steps];
        let mut targets = vec![0.0; steps];
        let horizon = batch.horizon;
        for e in 0..batch.envs {
            let seg = e * horizon..(e + 1) * horizon;
            let mut values = batch.values[seg.clone()].to_vec();
            values.push(batch.bootstrap[e]);
            let adv = compute_gae(
                &batch.rewards[seg.clone()],
                &values,
                &batch.dones[seg.clone()],
                self.ppo.gamma,
                self.ppo.lam,
            );
            let tgt = td_lambda_targets(
                &batch.rewards[seg.clone()],
                &values,
                &batch.dones[seg.clone()],
                self.ppo.gamma,
                self.ppo.lam,
            );
            advantages[seg.clone()].copy_from_slice(&adv);
            targets[seg].copy_from_slice(&tgt);
        }

        let diag = ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.policy_opt,
            &mut self.value_opt,
            &batch,
            &advantages,
            &targets,
            &self.ppo,
            &mut self.shuffle_rng,
        )?;

        self.iter += 1;
        self.env_steps += steps as u64;
        let task_return = if batch.episode_task_returns.is_empty() {
            f64::NAN
        } else {
            batch.episode_task_returns.iter().sum::<f64>() / batch.episode_task_returns.len() as f64
        };
        Ok(MetricsRow {
            iter: self.iter,
            env_steps: self.env_steps,
            task_return,
            mean_r_smp: batch.mean_r_smp(),
            kl: diag.approx_kl,
            clip_frac: diag.clip_fraction,
            norm_errors,
            eval_task_return: None,
        })
    }

    /// Deterministic evaluation episodes. `salt` separates eval streams
    /// (pass the iteration index).
    pub fn evaluate(&self, episodes: usize, salt: u64) -> Result<Vec<EvalEpisode>> {
        self.evaluate_with_goal(episodes, salt, None)
    }

    /// Evaluation with an optional fixed goal (held for the whole episode).
    pub fn evaluate_with_goal(
        &self,
        episodes: usize,
        salt: u64,
        fixed_goal: Option<Goal>,
    ) -> Result<Vec<EvalEpisode>> {
        let mut task = self.task.clone();
        if fixed_goal.is_some() {
            task.speed_resample_steps = 0;
        }
        let ctx = RolloutContext {
            env: &self.env,
            task: &task,
            prior: self.prior.as_ref(),
            cfg: &self.ppo,
            window_frames: WINDOW_FRAMES,
        };
        let mut out = Vec::with_capacity(episodes);
        for ep in 0..episodes {
            let mut rng = stream(self.seed, Domain::EnvReset, (salt << 20) ^ ep as u64);
            let (states, goals, task_return) = if let Some(goal) = fixed_goal {
                eval_episode_fixed_goal(&ctx, &self.policy, goal, &mut rng)?
            } else {
                eval_episode(&ctx, &self.policy, &mut rng)?
            };
            out.push(EvalEpisode {
                states,
                goals,
                task_return,
            });
        }
        Ok(out)
    }

    /// Mean per-step task reward over evaluation episodes.
    pub fn eval_task_return(&self, episodes: usize, salt: u64) -> Result<f64> {
        let eps = self.evaluate(episodes, salt)?;
        Ok(eps.iter().map(|e| e.task_return).sum::<f64>() / eps.len().max(1) as f64)
    }

    /// Run `iterations` more training steps, recording metrics (and periodic
    /// evaluations). Verifies the prior never changes along the way.
    pub fn run(&mut self, cfg: &TrainPolicyConfig, rows: &mut Vec<MetricsRow>) -> Result<()> {
        let digest0 = self.prior.as_ref().map(|p| p.digest());
        let mut last_return = rows.last().map(|r| r.task_return).unwrap_or(f64::NAN);
        for _ in 0..cfg.iterations {
            let mut row = self.step()?;
            // Batches without a completed episode carry the previous value.
            if row.task_return.is_nan() {
                row.task_return = last_return;
            } else {
                last_return = row.task_return;
            }
            if cfg.eval_every > 0 && self.iter % cfg.eval_every == 0 {
                row.eval_task_return =
                    Some(self.eval_task_return(cfg.eval_episodes, self.iter as u64)?);
            }
            rows.push(row);
        }
        let digest1 = self.prior.as_ref().map(|p| p.digest());
        if digest0 != digest1 {
            return Err(SmpError::Training {
                step: self.iter as u64,
                message: "prior parameters changed during training".into(),
            });
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Checkpointing
    // ------------------------------------------------------------------

    pub fn save(&self, path: &Path, config_echo: &str) -> Result<()> {
        let mut sections = Vec::new();

        let mut meta = Vec::new();
        wire::write_u64(&mut meta, self.seed)?;
        wire::write_u64(&mut meta, self.iter as u64)?;
        wire::write_u64(&mut meta, self.env_steps)?;
        wire::write_str(&mut meta, self.task.kind.name())?;
        wire::write_f64(&mut meta, self.task.speed_range.0)?;
        wire::write_f64(&mut meta, self.task.speed_range.1)?;
        wire::write_u32(&mut meta, self.task.speed_resample_steps)?;
        wire::write_f64(&mut meta, self.task.loc_spawn_dist.0)?;
        wire::write_f64(&mut meta, self.task.loc_spawn_dist.1)?;
        wire::write_f64(&mut meta, self.task.arrive_radius)?;
        wire::write_u32(&mut meta, self.task.arrive_hold_steps)?;
        wire::write_f64(&mut meta, self.task.loc_bound)?;
        write_ppo_config(&mut meta, &self.ppo)?;
        write_env_params(&mut meta, &self.env)?;
        match &self.initial_prior_digest {
            Some(d) => {
                wire::write_u8(&mut meta, 1)?;
                wire::write_str(&mut meta, d)?;
            }
            None => wire::write_u8(&mut meta, 0)?,
        }
        sections.push((*b"TMET", meta));

        let mut vbuf = Vec::new();
        crate::nn::write_param_set(&mut vbuf, &self.value.params, None)?;
        sections.push((*b"VALU", vbuf));

        let mut obuf = Vec::new();
        self.policy_opt.write(&mut obuf)?;
        sections.push((*b"OPTP", obuf));
        let mut obuf = Vec::new();
        self.value_opt.write(&mut obuf)?;
        sections.push((*b"OPTV", obuf));

        let mut sbuf = Vec::new();
        wire::write_u32(&mut sbuf, self.slots.len() as u32)?;
        for slot in &self.slots {
            write_env_state(&mut sbuf, &slot.state)?;
            wire::write_u32(&mut sbuf, slot.history.len() as u32)?;
            for s in &slot.history {
                write_env_state(&mut sbuf, s)?;
            }
            write_goal(&mut sbuf, &slot.goal)?;
            let pos = slot.rng_word_pos();
            wire::write_u64(&mut sbuf, pos as u64)?;
            wire::write_u64(&mut sbuf, (pos >> 64) as u64)?;
            wire::write_f64(&mut sbuf, slot.episode_task_sum)?;
        }
        sections.push((*b"SLOT", sbuf));

        let mut mbuf = Vec::new();
        if let Some(prior) = &self.prior {
            let n = prior.model().schedule.n;
            wire::write_u32(&mut mbuf, n as u32)?;
            for i in 0..=n {
                match prior.running_mean_raw(i) {
                    Some(m) => {
                        wire::write_u8(&mut mbuf, 1)?;
                        wire::write_f64(&mut mbuf, m)?;
                    }
                    None => wire::write_u8(&mut mbuf, 0)?,
                }
            }
        } else {
            wire::write_u32(&mut mbuf, 0)?;
        }
        sections.push((*b"RUNM", mbuf));

        let mut shuf = Vec::new();
        let pos = self.shuffle_rng.get_word_pos();
        wire::write_u64(&mut shuf, pos as u64)?;
        wire::write_u64(&mut shuf, (pos >> 64) as u64)?;
        sections.push((*b"SHUF", shuf));

        sections.push((*b"CFGE", config_echo.as_bytes().to_vec()));

        write_checkpoint(path, &self.policy.params, None, &sections)
    }

    /// Save only the policy network (plus config echo) as a standalone
    /// checkpoint usable for evaluation.
    pub fn save_policy(&self, path: &Path, config_echo: &str) -> Result<()> {
        write_checkpoint(
            path,
            &self.policy.params,
            None,
            &[(*b"CFGE", config_echo.as_bytes().to_vec())],
        )
    }

    /// Restore a trainer checkpoint. A prior must be supplied exactly when
    /// one was used at save time, with matching parameters.
    pub fn load(path: &Path, prior: Option<SmpPrior<DenoiserModel>>) -> Result<Self> {
        let ckpt = read_checkpoint(path)?;
        let mut meta = ckpt.require_section(b"TMET")?;
        let seed = wire::read_u64(&mut meta)?;
        let iter = wire::read_u64(&mut meta)? as usize;
        let env_steps = wire::read_u64(&mut meta)?;
        let task_kind = TaskKind::parse(&wire::read_str(&mut meta)?)?;
        let mut task = TaskConfig::new(task_kind);
        task.speed_range = (wire::read_f64(&mut meta)?, wire::read_f64(&mut meta)?);
        task.speed_resample_steps = wire::read_u32(&mut meta)?;
        task.loc_spawn_dist = (wire::read_f64(&mut meta)?, wire::read_f64(&mut meta)?);
        task.arrive_radius = wire::read_f64(&mut meta)?;
        task.arrive_hold_steps = wire::read_u32(&mut meta)?;
        task.loc_bound = wire::read_f64(&mut meta)?;
        let ppo = read_ppo_config(&mut meta)?;
        let env = read_env_params(&mut meta)?;
        let has_digest = wire::read_u8(&mut meta)? == 1;
        let stored_digest = if has_digest {
            Some(wire::read_str(&mut meta)?)
        } else {
            None
        };

        match (&stored_digest, &prior) {
            (Some(d), Some(p)) => {
                if *d != p.digest() {
                    return Err(SmpError::Config(
                        "prior does not match the one used for this training run".into(),
                    ));
                }
            }
            (Some(_), None) => {
                return Err(SmpError::Config(
                    "checkpoint was trained with a prior".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(SmpError::Config(
                    "checkpoint was trained without a prior".into(),
                ))
            }
            (None, None) => {}
        }

        let policy = PolicyModel::from_params(ckpt.params.clone())?;
        let mut vbuf = ckpt.require_section(b"VALU")?;
        let (vparams, _) = crate::nn::read_param_set(&mut vbuf)?;
        let value = ValueModel::from_params(vparams)?;

        let mut obuf = ckpt.require_section(b"OPTP")?;
        let policy_opt = Adam::read(&mut obuf)?;
        let mut obuf = ckpt.require_section(b"OPTV")?;
        let value_opt = Adam::read(&mut obuf)?;

        let mut sbuf = ckpt.require_section(b"SLOT")?;
        let n_slots = wire::read_u32(&mut sbuf)? as usize;
        let mut slots = Vec::with_capacity(n_slots);
        for e in 0..n_slots {
            let state = read_env_state(&mut sbuf)?;
            let h_len = wire::read_u32(&mut sbuf)? as usize;
            let mut history = Vec::with_capacity(h_len);
            for _ in 0..h_len {
                history.push(read_env_state(&mut sbuf)?);
            }
            let goal = read_goal(&mut sbuf)?;
            let lo = wire::read_u64(&mut sbuf)? as u128;
            let hi = wire::read_u64(&mut sbuf)? as u128;
            let episode_task_sum = wire::read_f64(&mut sbuf)?;
            let mut rng = stream(seed, Domain::Action, e as u64);
            rng.set_word_pos(lo | (hi << 64));
            slots.push(EnvSlot {
                state,
                history,
                goal,
                rng,
                episode_task_sum,
            });
        }

        let mut prior = prior;
        let mut mbuf = ckpt.require_section(b"RUNM")?;
        let n = wire::read_u32(&mut mbuf)? as usize;
        if n > 0 {
            let p = prior
                .as_mut()
                .ok_or_else(|| SmpError::Format("running means without a prior".into()))?;
            for i in 0..=n {
                if wire::read_u8(&mut mbuf)? == 1 {
                    p.set_running_mean(i, wire::read_f64(&mut mbuf)?);
                }
            }
        }

        let mut shuf = ckpt.require_section(b"SHUF")?;
        let lo = wire::read_u64(&mut shuf)? as u128;
        let hi = wire::read_u64(&mut shuf)? as u128;
        let mut shuffle_rng = stream(seed, Domain::Shuffle, 0);
        shuffle_rng.set_word_pos(lo | (hi << 64));

        Ok(Self {
            env,
            task,
            ppo,
            initial_prior_digest: stored_digest,
            prior,
            policy,
            value,
            policy_opt,
            value_opt,
            slots,
            shuffle_rng,
            iter,
            env_steps,
            seed,
        })
    }
}

/// Fixed-goal evaluation episode (goal never advances).
fn eval_episode_fixed_goal(
    ctx: &RolloutContext<'_>,
    policy: &PolicyModel,
    goal: Goal,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<EnvState>, Vec<Goal>, f64)> {
    use crate::env::{env_step, task_reward, Action};
    let mut slot = EnvSlot {
        state: EnvState::at_rest(),
        history: vec![EnvState::at_rest(); ctx.window_frames],
        goal: Goal::None,
        rng: rng.clone(),
        episode_task_sum: 0.0,
    };
    ctx.reset_slot(&mut slot)?;
    slot.goal = goal;

    let mut policy_trace = policy.make_trace();
    let mut obs = vec![0.0; ctx.obs_dim()];
    let mut mean = vec![0.0; policy.act_dim];
    let mut states = vec![slot.state];
    let mut goals = Vec::new();
    let mut task_sum = 0.0;
    for _ in 0..ctx.env.episode_len {
        super::rollout::build_obs(ctx.env, &slot.state, &slot.goal, &mut obs);
        policy.mean_into(&obs, &mut policy_trace, &mut mean);
        let next = env_step(ctx.env, &slot.state, &Action::from_slice(&mean))?;
        task_sum += task_reward(ctx.task, &next, &slot.goal);
        goals.push(slot.goal);
        states.push(next);
        slot.state = next;
    }
    *rng = slot.rng;
    Ok((states, goals, task_sum / ctx.env.episode_len as f64))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow], k_steps: &[usize]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    let mut header = String::from("iter,env_steps,task_return,mean_r_smp,kl,clip_frac");
    for i in k_steps {
        header.push_str(&format!(",norm_err_{i}"));
    }
    header.push_str(",eval_task_return\n");
    f.write_all(header.as_bytes())?;
    for row in rows {
        let mut line = format!(
            "{},{},{},{},{},{}",
            row.iter, row.env_steps, row.task_return, row.mean_r_smp, row.kl, row.clip_frac
        );
        for k in 0..k_steps.len() {
            match row.norm_errors.get(k) {
                Some(v) => line.push_str(&format!(",{v}")),
                None => line.push(','),
            }
        }
        match row.eval_task_return {
            Some(v) => line.push_str(&format!(",{v}\n")),
            None => line.push_str(",\n"),
        }
        f.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn write_env_state(w: &mut impl std::io::Write, s: &EnvState) -> Result<()> {
    for v in [
        s.pos[0],
        s.pos[1],
        s.heading,
        s.vel[0],
        s.vel[1],
        s.ang_vel,
        s.limb_angle[0],
        s.limb_angle[1],
        s.limb_vel[0],
        s.limb_vel[1],
    ] {
        wire::write_f64(w, v)?;
    }
    wire::write_u32(w, s.step)?;
    Ok(())
}

fn read_env_state(r: &mut impl Read) -> Result<EnvState> {
    let mut v = [0.0; 10];
    for x in v.iter_mut() {
        *x = wire::read_f64(r)?;
    }
    Ok(EnvState {
        pos: [v[0], v[1]],
        heading: v[2],
        vel: [v[3], v[4]],
        ang_vel: v[5],
        limb_angle: [v[6], v[7]],
        limb_vel: [v[8], v[9]],
        step: wire::read_u32(r)?,
    })
}

fn write_goal(w: &mut impl std::io::Write, g: &Goal) -> Result<()> {
    match g {
        Goal::Speed(v) => {
            wire::write_u8(w, 0)?;
            wire::write_f64(w, *v)?;
        }
        Goal::Location { target, held } => {
            wire::write_u8(w, 1)?;
            wire::write_f64(w, target[0])?;
            wire::write_f64(w, target[1])?;
            wire::write_u32(w, *held)?;
        }
        Goal::None => wire::write_u8(w, 2)?,
    }
    Ok(())
}

fn read_goal(r: &mut impl Read) -> Result<Goal> {
    match wire::read_u8(r)? {
        0 => Ok(Goal::Speed(wire::read_f64(r)?)),
        1 => Ok(Goal::Location {
            target: [wire::read_f64(r)?, wire::read_f64(r)?],
            held: wire::read_u32(r)?,
        }),
        2 => Ok(Goal::None),
        t => Err(SmpError::Format(format!("unknown goal tag {t}"))),
    }
}

fn write_ppo_config(w: &mut impl std::io::Write, c: &PpoConfig) -> Result<()> {
    for v in [
        c.gamma,
        c.lam,
        c.clip,
        c.lr,
        c.entropy_coef,
        c.w_prior,
        c.w_g,
        c.kl_limit,
        c.grad_clip,
        c.spawn_half_extent,
    ] {
        wire::write_f64(w, v)?;
    }
    for v in [c.envs, c.horizon, c.epochs, c.minibatch, c.threads] {
        wire::write_u64(w, v as u64)?;
    }
    wire::write_u32(w, c.hidden.len() as u32)?;
    for &h in &c.hidden {
        wire::write_u32(w, h as u32)?;
    }
    match c.use_gsi {
        None => wire::write_u8(w, 2)?,
        Some(false) => wire::write_u8(w, 0)?,
        Some(true) => wire::write_u8(w, 1)?,
    }
    Ok(())
}

fn read_ppo_config(r: &mut impl Read) -> Result<PpoConfig> {
    let mut f = [0.0; 10];
    for v in f.iter_mut() {
        *v = wire::read_f64(r)?;
    }
    let mut u = [0u64; 5];
    for v in u.iter_mut() {
        *v = wire::read_u64(r)?;
    }
    let n_hidden = wire::read_u32(r)? as usize;
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(wire::read_u32(r)? as usize);
    }
    let use_gsi = match wire::read_u8(r)? {
        0 => Some(false),
        1 => Some(true),
        _ => None,
    };
    Ok(PpoConfig {
        gamma: f[0],
        lam: f[1],
        clip: f[2],
        lr: f[3],
        entropy_coef: f[4],
        w_prior: f[5],
        w_g: f[6],
        kl_limit: f[7],
        grad_clip: f[8],
        spawn_half_extent: f[9],
        envs: u[0] as usize,
        horizon: u[1] as usize,
        epochs: u[2] as usize,
        minibatch: u[3] as usize,
        threads: u[4] as usize,
        hidden,
        use_gsi,
    })
}

fn write_env_params(w: &mut impl std::io::Write, e: &EnvParams) -> Result<()> {
    for v in [
        e.dt,
        e.mass,
        e.force_max,
        e.drag,
        e.turn_torque_max,
        e.turn_damp,
        e.limb_torque_max,
        e.limb_spring,
        e.limb_damp,
        e.limb_len,
        e.speed_cap,
    ] {
        wire::write_f64(w, v)?;
    }
    wire::write_u32(w, e.episode_len)?;
    Ok(())
}

fn read_env_params(r: &mut impl Read) -> Result<EnvParams> {
    let mut f = [0.0; 11];
    for v in f.iter_mut() {
        *v = wire::read_f64(r)?;
    }
    Ok(EnvParams {
        dt: f[0],
        mass: f[1],
        force_max: f[2],
        drag: f[3],
        turn_torque_max: f[4],
        turn_damp: f[5],
        limb_torque_max: f[6],
        limb_spring: f[7],
        limb_damp: f[8],
        limb_len: f[9],
        speed_cap: f[10],
        episode_len: wire::read_u32(r)?,
    })
}


#[cfg(test)]
mod probes {
    use super::*;

    #[test]
    #[ignore]
    fn pure_task_learning_probe() {
        let env = EnvParams::default();
        let task = TaskConfig::new(TaskKind::TargetSpeed);
        let ppo = PpoConfig { w_prior: 0.0, w_g: 1.0, ..PpoConfig::default() };
        let mut trainer = PolicyTrainer::new(env, task, ppo, None, 1).unwrap();
        let t0 = std::time::Instant::now();
        for block in 0..6 {
            let mut rows = Vec::new();
            trainer
                .run(&TrainPolicyConfig { iterations: 25, eval_every: 0, eval_episodes: 4 }, &mut rows)
                .unwrap();
            let eval = trainer.eval_task_return(6, trainer.iter as u64).unwrap();
            let last = rows.last().unwrap();
            println!(
                "iter {:>3}: batch task {:.3}, eval {:.3}, kl {:.4}, clip {:.2} ({:.0?})",
                last.iter,
                last.task_return,
                eval,
                last.kl,
                last.clip_frac,
                t0.elapsed()
            );
            let _ = block;
        }
    }
}
