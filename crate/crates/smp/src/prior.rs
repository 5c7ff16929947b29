//! The frozen score-matching motion prior.
//!
//! A trained denoiser is repurposed as a stationary reward model: the
//! agent's motion window is diffused to each timestep in a fixed set `K`,
//! the denoiser predicts the added noise, and the reward is an exponential
//! of the average normalized prediction error,
//! `r = exp(-(w_s/|K|) * sum_i e_i / mu_i)`. Running means `mu_i` absorb the
//! scale differences between noise levels. The same frozen model also
//! generates episode initial states by reverse sampling (generative state
//! initialization), so policy training needs no access to the dataset the
//! prior was trained on.

use rand::Rng;

use crate::diffusion::{
    forward_diffuse_into, sample_reverse_directed, DenoiserModel, EpsPredictor, StyleDirective,
};
use crate::env::features::{idx, FEATURE_DIM};
use crate::env::{default_init_state, EnvParams, EnvState};
use crate::error::{Result, SmpError};
use crate::rng::fill_normal;

/// Fractions of N defining the fixed timestep set K.
pub const K_FRACTIONS: [f64; 3] = [0.44, 0.30, 0.16];

/// Floor applied to running means at normalization time, so an essentially
/// perfect predictor (errors at float-rounding scale) keeps reward 1 instead
/// of amplifying rounding dust.
const MEAN_FLOOR: f64 = 1e-12;

/// How reward timesteps are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestepMode {
    /// Average the error over the fixed set K.
    Ensemble,
    /// Draw a single uniformly random timestep per evaluation.
    SingleRandom,
}

#[derive(Debug, Clone)]
pub struct PriorConfig {
    /// Reward sharpness on the normalized errors. Off-distribution motion
    /// lands an order of magnitude above the running means, so a w_s well
    /// below 1 keeps the reward resolvable across that whole range instead
    /// of flattening everything unusual to zero.
    pub w_s: f64,
    pub mean_decay: f64,
    pub mode: TimestepMode,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            w_s: 0.2,
            mean_decay: 0.999,
            mode: TimestepMode::Ensemble,
        }
    }
}

/// One reward evaluation: raw and normalized errors per timestep, and the
/// final reward in (0, 1].
#[derive(Debug, Clone)]
pub struct RewardSample {
    pub errors: Vec<(usize, f64)>,
    pub normalized: Vec<f64>,
    pub reward: f64,
}

/// Per-timestep error sums collected over a batch, committed to the running
/// means in one deterministic pass.
#[derive(Debug, Clone, Default)]
pub struct ErrorAccumulator {
    sums: Vec<(usize, f64, u64)>,
}

impl ErrorAccumulator {
    pub fn record(&mut self, i: usize, error: f64) {
        match self.sums.iter_mut().find(|(step, _, _)| *step == i) {
            Some((_, sum, count)) => {
                *sum += error;
                *count += 1;
            }
            None => self.sums.push((i, error, 1)),
        }
    }

    /// Merge another accumulator (order-fixed reduction across workers).
    pub fn merge(&mut self, other: &ErrorAccumulator) {
        for &(i, sum, count) in &other.sums {
            match self.sums.iter_mut().find(|(step, _, _)| *step == i) {
                Some((_, s, c)) => {
                    *s += sum;
                    *c += count;
                }
                None => self.sums.push((i, sum, count)),
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SmpPrior<P: EpsPredictor> {
    model: P,
    directive: StyleDirective,
    config: PriorConfig,
    timesteps: Vec<usize>,
    /// Running mean error per timestep, indexed 1..=N; None before warmup.
    means: Vec<Option<f64>>,
}

impl<P: EpsPredictor> SmpPrior<P> {
    pub fn new(model: P, directive: StyleDirective, config: PriorConfig) -> Result<Self> {
        directive.validate_for(&model)?;
        let n = model.schedule().n;
        let timesteps: Vec<usize> = K_FRACTIONS
            .iter()
            .map(|f| ((f * n as f64).round() as usize).clamp(1, n))
            .collect();
        Ok(Self {
            model,
            directive,
            config,
            timesteps,
            means: vec![None; n + 1],
        })
    }

    pub fn model(&self) -> &P {
        &self.model
    }

    pub fn directive(&self) -> &StyleDirective {
        &self.directive
    }

    pub fn mode(&self) -> TimestepMode {
        self.config.mode
    }

    /// The fixed timestep set K.
    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    /// Override the fixed timestep set (ablations with |K| = 1).
    pub fn force_timesteps(&mut self, timesteps: Vec<usize>) {
        assert!(!timesteps.is_empty());
        let n = self.model.schedule().n;
        assert!(timesteps.iter().all(|&i| (1..=n).contains(&i)));
        self.timesteps = timesteps;
    }

    pub fn digest(&self) -> String {
        self.model.digest()
    }

    pub fn running_mean(&self, i: usize) -> Option<f64> {
        self.means[i]
    }

    /// All stored running means, for trainer checkpointing.
    pub fn running_mean_raw(&self, i: usize) -> Option<f64> {
        self.means.get(i).copied().flatten()
    }

    pub fn set_running_mean(&mut self, i: usize, value: f64) {
        if i < self.means.len() {
            self.means[i] = Some(value);
        }
    }

    /// `mu_i' = d * mu_i + (1 - d) * batch_mean`; the first call initializes
    /// `mu_i = batch_mean`.
    pub fn update_running_mean(&mut self, i: usize, batch_mean: f64) {
        let d = self.config.mean_decay;
        self.means[i] = Some(match self.means[i] {
            None => batch_mean,
            Some(m) => d * m + (1.0 - d) * batch_mean,
        });
    }

    /// Apply a batch worth of accumulated errors to the running means, in
    /// ascending timestep order.
    pub fn commit_stats(&mut self, accum: &ErrorAccumulator) {
        let mut sums = accum.sums.clone();
        sums.sort_by_key(|&(i, _, _)| i);
        for (i, sum, count) in sums {
            if count > 0 {
                self.update_running_mean(i, sum / count as f64);
            }
        }
    }

    /// Evaluate the reward on a z-normalized window. Fresh noise is drawn
    /// per timestep; raw errors are recorded into `accum` when given (the
    /// running means themselves stay fixed during evaluation).
    pub fn reward(
        &self,
        window_z: &[f64],
        rng: &mut impl Rng,
        mut accum: Option<&mut ErrorAccumulator>,
    ) -> Result<RewardSample> {
        let dim = self.model.window_dim();
        if window_z.len() != dim {
            return Err(SmpError::Input(format!(
                "window length {} does not match model dimension {dim}",
                window_z.len()
            )));
        }
        let mean = window_z.iter().sum::<f64>() / dim as f64;
        if !mean.is_finite() || mean.abs() > 10.0 {
            return Err(SmpError::Input(format!(
                "window does not look z-normalized (mean {mean:.2})"
            )));
        }

        let schedule = self.model.schedule();
        let steps: Vec<usize> = match self.config.mode {
            TimestepMode::Ensemble => self.timesteps.clone(),
            TimestepMode::SingleRandom => vec![rng.gen_range(1..=schedule.n)],
        };

        let mut eps = vec![0.0; dim];
        let mut x_i = vec![0.0; dim];
        let mut eps_hat = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];
        let mut errors = Vec::with_capacity(steps.len());
        let mut normalized = Vec::with_capacity(steps.len());
        let mut total = 0.0;
        for &i in &steps {
            fill_normal(rng, &mut eps);
            forward_diffuse_into(schedule, window_z, i, &eps, &mut x_i);
            self.directive
                .predict_eps(&self.model, &x_i, i, &mut eps_hat, &mut scratch)?;
            let e: f64 = eps
                .iter()
                .zip(eps_hat.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if let Some(acc) = accum.as_deref_mut() {
                acc.record(i, e);
            }
            let mu = self.means[i].unwrap_or(1.0).max(MEAN_FLOOR);
            let norm = e / mu;
            errors.push((i, e));
            normalized.push(norm);
            total += norm;
        }
        let reward = (-(self.config.w_s / steps.len() as f64) * total).exp();
        Ok(RewardSample {
            errors,
            normalized,
            reward,
        })
    }

    /// Single-call variant that also advances the running means.
    pub fn reward_updating(
        &mut self,
        window_z: &[f64],
        rng: &mut impl Rng,
    ) -> Result<RewardSample> {
        let mut accum = ErrorAccumulator::default();
        let sample = self.reward(window_z, rng, Some(&mut accum))?;
        self.commit_stats(&accum);
        Ok(sample)
    }

    /// Initialize the running means from a batch of windows. Ensemble mode
    /// warms the set K; single-random mode warms every timestep.
    pub fn warmup_stats(&mut self, windows_z: &[Vec<f64>], rng: &mut impl Rng) -> Result<()> {
        let schedule_n = self.model.schedule().n;
        let steps: Vec<usize> = match self.config.mode {
            TimestepMode::Ensemble => self.timesteps.clone(),
            TimestepMode::SingleRandom => (1..=schedule_n).collect(),
        };
        let dim = self.model.window_dim();
        let mut eps = vec![0.0; dim];
        let mut x_i = vec![0.0; dim];
        let mut eps_hat = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];
        for &i in &steps {
            let mut sum = 0.0;
            for window in windows_z {
                fill_normal(rng, &mut eps);
                forward_diffuse_into(self.model.schedule(), window, i, &eps, &mut x_i);
                self.directive
                    .predict_eps(&self.model, &x_i, i, &mut eps_hat, &mut scratch)?;
                sum += eps
                    .iter()
                    .zip(eps_hat.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            self.update_running_mean(i, sum / windows_z.len().max(1) as f64);
        }
        Ok(())
    }
}

/// Linear reward mix: `w_prior * r_smp + w_g * r_task`.
pub fn composite_reward(r_smp: f64, r_task: f64, w_prior: f64, w_g: f64) -> f64 {
    debug_assert!(
        w_prior >= 0.0 && w_g >= 0.0,
        "reward weights must be non-negative"
    );
    w_prior * r_smp + w_g * r_task
}

/// Episode start produced by generative state initialization: the sampled
/// window doubles as the feature history for the first reward evaluations.
#[derive(Debug, Clone)]
pub struct GsiInit {
    pub state: EnvState,
    /// H states ending at `state`, consistent with the sampled window.
    pub history: Vec<EnvState>,
}

impl SmpPrior<DenoiserModel> {
    pub fn load(
        path: &std::path::Path,
        directive: StyleDirective,
        config: PriorConfig,
    ) -> Result<Self> {
        let model = DenoiserModel::load(path)?;
        Self::new(model, directive, config)
    }

    /// Draw an initial state by sampling a window from the prior and
    /// converting its last frame into an environment state. Global position
    /// and heading are randomized (the features are local-frame, so the
    /// global pose is unconstrained). Falls back to the uniform default
    /// state if ten consecutive samples violate environment bounds.
    pub fn gsi_sample(
        &self,
        env: &EnvParams,
        spawn_half_extent: f64,
        rng: &mut impl Rng,
    ) -> Result<GsiInit> {
        let frames = self.model.config.window_frames;
        let dim = self.model.window_dim();
        let mut raw = vec![0.0; dim];
        for _ in 0..10 {
            let z = sample_reverse_directed(&self.model, &self.directive, rng)?;
            self.model.denormalize(&z, &mut raw);
            let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let pos = [
                rng.gen_range(-spawn_half_extent..spawn_half_extent),
                rng.gen_range(-spawn_half_extent..spawn_half_extent),
            ];
            if let Some(init) = window_to_init(env, &raw, frames, pos, heading) {
                return Ok(init);
            }
        }
        let mut state = default_init_state(rng);
        state.step = 0;
        Ok(GsiInit {
            state,
            history: vec![state; frames],
        })
    }
}

/// Convert a denormalized feature window into an environment state plus a
/// consistent state history. Returns None when the window violates
/// environment bounds.
pub(crate) fn window_to_init(
    env: &EnvParams,
    raw: &[f64],
    frames: usize,
    pos: [f64; 2],
    heading: f64,
) -> Option<GsiInit> {
    assert_eq!(raw.len(), frames * FEATURE_DIM);
    let (c, s) = (heading.cos(), heading.sin());
    let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];

    let mut states = Vec::with_capacity(frames);
    for j in 0..frames {
        let f = &raw[j * FEATURE_DIM..(j + 1) * FEATURE_DIM];
        let vel = rot([f[idx::VEL_X], f[idx::VEL_Y]]);
        let limb_angle = [
            f[idx::LIMB1_SIN].atan2(f[idx::LIMB1_COS]),
            f[idx::LIMB2_SIN].atan2(f[idx::LIMB2_COS]),
        ];
        let state = EnvState {
            pos: [0.0, 0.0],
            heading: 0.0,
            vel,
            ang_vel: f[idx::ANG_VEL],
            limb_angle,
            limb_vel: [f[idx::LIMB1_VEL], f[idx::LIMB2_VEL]],
            step: 0,
        };
        if !state.is_finite() || state.speed() > env.speed_cap {
            return None;
        }
        if state.limb_vel.iter().any(|v| v.abs() > 50.0) || state.ang_vel.abs() > 20.0 {
            return None;
        }
        states.push(state);
    }

    // Anchor the last frame at the randomized pose, then integrate poses
    // backwards so the history is Euler-consistent with the velocities.
    let last = frames - 1;
    states[last].pos = pos;
    states[last].heading = heading;
    for j in (0..last).rev() {
        let next = states[j + 1];
        states[j].pos = [
            next.pos[0] - env.dt * next.vel[0],
            next.pos[1] - env.dt * next.vel[1],
        ];
        states[j].heading = crate::env::wrap_angle(next.heading - env.dt * next.ang_vel);
    }
    let state = states[last];
    Some(GsiInit {
        state,
        history: states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_schedule, NoiseSchedule, StyleLabel};
    use crate::env::dataset::{synth_clip, ClipMeta};
    use crate::env::features::extract_features;
    use crate::env::features::WINDOW_FRAMES;
    use crate::rng::{stream, Domain};

    /// Recovers the exact noise for a known point mass: zero SDS error.
    struct EchoStub {
        schedule: NoiseSchedule,
        x0: Vec<f64>,
    }

    impl EpsPredictor for EchoStub {
        fn window_dim(&self) -> usize {
            self.x0.len()
        }
        fn schedule(&self) -> &NoiseSchedule {
            &self.schedule
        }
        fn predict(&self, x: &[f64], i: usize, _style: StyleLabel, out: &mut [f64]) {
            let ab = self.schedule.alpha_bar(i);
            for (o, (xi, x0)) in out.iter_mut().zip(x.iter().zip(self.x0.iter())) {
                *o = (xi - ab.sqrt() * x0) / (1.0 - ab).sqrt();
            }
        }
    }

    /// Scales the true noise by a timestep-dependent factor, so errors are
    /// chi-square distributed with per-step scale.
    struct ScaledStub {
        schedule: NoiseSchedule,
        dim: usize,
    }

    impl EpsPredictor for ScaledStub {
        fn window_dim(&self) -> usize {
            self.dim
        }
        fn schedule(&self) -> &NoiseSchedule {
            &self.schedule
        }
        fn predict(&self, x: &[f64], i: usize, _style: StyleLabel, out: &mut [f64]) {
            // x here is sqrt(1-ab) * eps for a zero window, so this predicts
            // (1 + a_i) * eps.
            let ab = self.schedule.alpha_bar(i);
            let a_i = 0.2 + 0.01 * i as f64;
            for (o, xi) in out.iter_mut().zip(x.iter()) {
                *o = (1.0 + a_i) * xi / (1.0 - ab).sqrt();
            }
        }
    }

    fn echo_prior(dim: usize) -> SmpPrior<EchoStub> {
        let stub = EchoStub {
            schedule: build_schedule(50).unwrap(),
            x0: vec![0.0; dim],
        };
        SmpPrior::new(stub, StyleDirective::Unconditional, PriorConfig::default()).unwrap()
    }

    #[test]
    fn fixed_set_is_22_15_8_for_fifty_steps() {
        let prior = echo_prior(8);
        assert_eq!(prior.timesteps(), &[22, 15, 8]);
    }

    #[test]
    fn perfect_prediction_gives_reward_one() {
        let prior = echo_prior(8);
        let mut rng = stream(0, Domain::Reward, 0);
        let sample = prior.reward(&vec![0.0; 8], &mut rng, None).unwrap();
        assert_eq!(sample.reward, 1.0);
        assert!(sample.errors.iter().all(|&(_, e)| e < 1e-24));
    }

    #[test]
    fn reward_stays_in_unit_interval() {
        let stub = ScaledStub {
            schedule: build_schedule(50).unwrap(),
            dim: 8,
        };
        let mut prior =
            SmpPrior::new(stub, StyleDirective::Unconditional, PriorConfig::default()).unwrap();
        let mut rng = stream(1, Domain::Reward, 0);
        let window = vec![0.0; 8];
        prior.warmup_stats(&[window.clone()], &mut rng).unwrap();
        for _ in 0..200 {
            let r = prior.reward(&window, &mut rng, None).unwrap().reward;
            assert!(r > 0.0 && r <= 1.0);
        }
    }

    #[test]
    fn unnormalized_window_is_rejected() {
        let prior = echo_prior(4);
        let mut rng = stream(2, Domain::Reward, 0);
        let err = prior.reward(&vec![50.0; 4], &mut rng, None).unwrap_err();
        assert!(matches!(err, SmpError::Input(_)));
    }

    #[test]
    fn running_mean_follows_the_recurrence() {
        let mut prior = echo_prior(4);
        prior.config.mean_decay = 0.9;
        prior.update_running_mean(8, 1.0);
        assert_eq!(prior.running_mean(8), Some(1.0));
        prior.update_running_mean(8, 2.0);
        assert!((prior.running_mean(8).unwrap() - 1.1).abs() < 1e-15);
    }

    #[test]
    fn decay_zero_tracks_the_latest_batch() {
        let mut prior = echo_prior(4);
        prior.config.mean_decay = 0.0;
        prior.update_running_mean(15, 3.0);
        prior.update_running_mean(15, 7.0);
        assert_eq!(prior.running_mean(15), Some(7.0));
    }

    #[test]
    fn constant_error_stream_is_a_fixed_point() {
        let mut prior = echo_prior(4);
        prior.config.mean_decay = 0.5;
        for _ in 0..100 {
            prior.update_running_mean(22, 4.0);
        }
        assert!((prior.running_mean(22).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_errors_converge_to_one_on_stationary_stream() {
        let stub = ScaledStub {
            schedule: build_schedule(50).unwrap(),
            dim: 16,
        };
        let mut prior =
            SmpPrior::new(stub, StyleDirective::Unconditional, PriorConfig::default()).unwrap();
        let mut rng = stream(3, Domain::Reward, 0);
        let window = vec![0.0; 16];
        let mut mean_normalized = 0.0;
        for batch in 0..500 {
            let mut accum = ErrorAccumulator::default();
            let mut batch_norm = 0.0;
            for _ in 0..8 {
                let s = prior.reward(&window, &mut rng, Some(&mut accum)).unwrap();
                batch_norm += s.normalized.iter().sum::<f64>() / s.normalized.len() as f64;
            }
            prior.commit_stats(&accum);
            mean_normalized = batch_norm / 8.0;
            let _ = batch;
        }
        assert!(
            (mean_normalized - 1.0).abs() < 0.1,
            "normalized mean {mean_normalized}"
        );
    }

    #[test]
    fn ensemble_reward_varies_less_than_single_random_timestep() {
        let schedule = build_schedule(50).unwrap();
        let window = vec![0.0; 16];
        let mut rng = stream(4, Domain::Reward, 0);

        let make = |mode: TimestepMode, rng: &mut rand_chacha::ChaCha8Rng| {
            let stub = ScaledStub {
                schedule: build_schedule(50).unwrap(),
                dim: 16,
            };
            let mut prior = SmpPrior::new(
                stub,
                StyleDirective::Unconditional,
                PriorConfig {
                    mode,
                    ..PriorConfig::default()
                },
            )
            .unwrap();
            prior
                .warmup_stats(&(0..64).map(|_| window.clone()).collect::<Vec<_>>(), rng)
                .unwrap();
            prior
        };
        let ensemble = make(TimestepMode::Ensemble, &mut rng);
        let random = make(TimestepMode::SingleRandom, &mut rng);

        let std_of = |prior: &SmpPrior<ScaledStub>, rng: &mut rand_chacha::ChaCha8Rng| {
            let rewards: Vec<f64> = (0..100)
                .map(|_| prior.reward(&window, rng, None).unwrap().reward)
                .collect();
            let m = rewards.iter().sum::<f64>() / rewards.len() as f64;
            (rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rewards.len() as f64).sqrt()
        };
        let se = std_of(&ensemble, &mut rng);
        let sr = std_of(&random, &mut rng);
        assert!(se < sr, "ensemble std {se} vs random std {sr}");
        let _ = schedule;
    }

    #[test]
    fn digest_is_stable_across_reward_calls() {
        let prior = echo_prior(8);
        let d0 = prior.digest();
        let mut rng = stream(5, Domain::Reward, 0);
        for _ in 0..10 {
            prior.reward(&vec![0.0; 8], &mut rng, None).unwrap();
        }
        assert_eq!(prior.digest(), d0);
    }

    #[test]
    fn composite_reward_is_the_linear_mix() {
        assert_eq!(composite_reward(1.0, 0.0, 0.5, 0.5), 0.5);
        assert_eq!(composite_reward(0.8, 0.4, 1.0, 0.0), 0.8);
        assert_eq!(composite_reward(0.8, 0.4, 0.0, 1.0), 0.4);
    }

    #[test]
    fn window_conversion_reproduces_a_straight_clip() {
        let env = EnvParams::default();
        let meta = ClipMeta {
            style: 0,
            speed: 2.0,
            duration: 1.0,
            phase0: 0.4,
            turn_rate: 0.0,
        };
        let states = synth_clip(&env, &meta);
        let window = extract_features(&env, &states[..WINDOW_FRAMES]);
        let init = window_to_init(&env, &window, WINDOW_FRAMES, [1.0, -2.0], 0.7).unwrap();
        assert_eq!(init.history.len(), WINDOW_FRAMES);
        assert_eq!(init.state.pos, [1.0, -2.0]);
        assert!((init.state.heading - 0.7).abs() < 1e-12);
        // Re-extracted features match the sampled window.
        let back = extract_features(&env, &init.history);
        for (a, b) in back.iter().zip(window.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn gsi_falls_back_on_wild_windows() {
        let env = EnvParams::default();
        // Velocities far over the cap force the bounds check to fail.
        let raw: Vec<f64> = (0..WINDOW_FRAMES * FEATURE_DIM).map(|_| 1e3).collect();
        assert!(window_to_init(&env, &raw, WINDOW_FRAMES, [0.0, 0.0], 0.0).is_none());
    }
}
