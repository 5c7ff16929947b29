//! Deterministic planar gait character.
//!
//! The character is a point root with heading and two swinging limbs,
//! integrated with semi-implicit Euler at 30 Hz. Limbs are damped springs
//! driven by direct torques. The module also defines the task rewards
//! (target speed, target location, single-clip imitation) and goal
//! bookkeeping used by the trainer.

pub mod dataset;
pub mod features;

use rand::Rng;

use crate::error::{Result, SmpError};

/// Physical constants of the environment. Defaults give top speeds around
/// 7 m/s so the target-speed range below fits comfortably.
#[derive(Debug, Clone)]
pub struct EnvParams {
    pub dt: f64,
    pub mass: f64,
    pub force_max: f64,
    pub drag: f64,
    pub turn_torque_max: f64,
    pub turn_damp: f64,
    pub limb_torque_max: f64,
    pub limb_spring: f64,
    pub limb_damp: f64,
    pub limb_len: f64,
    pub speed_cap: f64,
    pub episode_len: u32,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            mass: 1.0,
            force_max: 8.0,
            drag: 0.8,
            turn_torque_max: 10.0,
            turn_damp: 4.0,
            limb_torque_max: 150.0,
            limb_spring: 20.0,
            limb_damp: 1.0,
            limb_len: 0.5,
            speed_cap: 10.0,
            episode_len: 300,
        }
    }
}

/// Full simulation state. All quantities are in world coordinates except the
/// limb angles, which are relative to the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub heading: f64,
    pub vel: [f64; 2],
    pub ang_vel: f64,
    pub limb_angle: [f64; 2],
    pub limb_vel: [f64; 2],
    pub step: u32,
}

impl EnvState {
    pub fn at_rest() -> Self {
        Self {
            pos: [0.0, 0.0],
            heading: 0.0,
            vel: [0.0, 0.0],
            ang_vel: 0.0,
            limb_angle: [0.0, 0.0],
            limb_vel: [0.0, 0.0],
            step: 0,
        }
    }

    pub fn speed(&self) -> f64 {
        (self.vel[0] * self.vel[0] + self.vel[1] * self.vel[1]).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|v| v.is_finite())
            && self.heading.is_finite()
            && self.vel.iter().all(|v| v.is_finite())
            && self.ang_vel.is_finite()
            && self.limb_angle.iter().all(|v| v.is_finite())
            && self.limb_vel.iter().all(|v| v.is_finite())
    }
}

/// Normalized control input; components are clamped to [-1, 1] before the
/// per-channel scales in [`EnvParams`] apply.
#[derive(Debug, Clone, Copy, Default)]
pub struct Action {
    pub forward: f64,
    pub turn: f64,
    pub limb: [f64; 2],
}

impl Action {
    pub fn clamped(&self) -> Action {
        Action {
            forward: self.forward.clamp(-1.0, 1.0),
            turn: self.turn.clamp(-1.0, 1.0),
            limb: [self.limb[0].clamp(-1.0, 1.0), self.limb[1].clamp(-1.0, 1.0)],
        }
    }

    pub fn from_slice(a: &[f64]) -> Action {
        Action {
            forward: a[0],
            turn: a[1],
            limb: [a[2], a[3]],
        }
    }
}

pub const ACTION_DIM: usize = 4;

#[inline]
pub fn heading_dir(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = (theta + std::f64::consts::PI).rem_euclid(two_pi);
    if t < 0.0 {
        t += two_pi;
    }
    t - std::f64::consts::PI
}

/// One semi-implicit Euler step. Update order: root velocity (with speed
/// cap), root position, angular velocity, heading, then each limb with
/// joint-limit clamping at |q| = pi (hitting the limit zeroes the limb
/// velocity).
pub fn env_step(params: &EnvParams, state: &EnvState, action: &Action) -> Result<EnvState> {
    let a = action.clamped();
    let dt = params.dt;
    let dir = heading_dir(state.heading);

    let fx = a.forward * params.force_max * dir[0] - params.drag * state.vel[0];
    let fy = a.forward * params.force_max * dir[1] - params.drag * state.vel[1];
    let mut vel = [
        state.vel[0] + dt * fx / params.mass,
        state.vel[1] + dt * fy / params.mass,
    ];
    let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
    if speed > params.speed_cap {
        let s = params.speed_cap / speed;
        vel[0] *= s;
        vel[1] *= s;
    }
    let pos = [state.pos[0] + dt * vel[0], state.pos[1] + dt * vel[1]];

    let ang_acc = a.turn * params.turn_torque_max - params.turn_damp * state.ang_vel;
    let ang_vel = state.ang_vel + dt * ang_acc;
    let heading = wrap_angle(state.heading + dt * ang_vel);

    let mut limb_angle = [0.0; 2];
    let mut limb_vel = [0.0; 2];
    for k in 0..2 {
        let acc = a.limb[k] * params.limb_torque_max
            - params.limb_damp * state.limb_vel[k]
            - params.limb_spring * state.limb_angle[k];
        let mut qv = state.limb_vel[k] + dt * acc;
        let mut q = state.limb_angle[k] + dt * qv;
        if q.abs() > std::f64::consts::PI {
            q = q.clamp(-std::f64::consts::PI, std::f64::consts::PI);
            qv = 0.0;
        }
        limb_angle[k] = q;
        limb_vel[k] = qv;
    }

    let next = EnvState {
        pos,
        heading,
        vel,
        ang_vel,
        limb_angle,
        limb_vel,
        step: state.step + 1,
    };
    if !next.is_finite() {
        return Err(SmpError::Simulation {
            step: next.step as u64,
            message: "state became non-finite".into(),
        });
    }
    Ok(next)
}

/// Mount points of the two limbs in the body frame.
pub const LIMB_MOUNT: [[f64; 2]; 2] = [[0.0, 0.2], [0.0, -0.2]];

/// Limb-tip position in the body frame.
#[inline]
pub fn limb_tip_local(params: &EnvParams, q: f64, limb: usize) -> [f64; 2] {
    [
        LIMB_MOUNT[limb][0] + params.limb_len * q.cos(),
        LIMB_MOUNT[limb][1] + params.limb_len * q.sin(),
    ]
}

/// Limb-tip position in world coordinates.
pub fn limb_tip_world(params: &EnvParams, state: &EnvState, limb: usize) -> [f64; 2] {
    let local = limb_tip_local(params, state.limb_angle[limb], limb);
    let (c, s) = (state.heading.cos(), state.heading.sin());
    [
        state.pos[0] + c * local[0] - s * local[1],
        state.pos[1] + s * local[0] + c * local[1],
    ]
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    TargetSpeed,
    TargetLocation,
    Imitation,
}

impl TaskKind {
    pub fn goal_dim(&self) -> usize {
        match self {
            TaskKind::TargetSpeed => 1,
            TaskKind::TargetLocation => 2,
            TaskKind::Imitation => 0,
        }
    }

    pub fn parse(s: &str) -> Result<TaskKind> {
        match s {
            "target-speed" => Ok(TaskKind::TargetSpeed),
            "target-location" => Ok(TaskKind::TargetLocation),
            "imitation" => Ok(TaskKind::Imitation),
            other => Err(SmpError::Config(format!("unknown task '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::TargetSpeed => "target-speed",
            TaskKind::TargetLocation => "target-location",
            TaskKind::Imitation => "imitation",
        }
    }
}

/// Task parameters with their resampling rules.
#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// Target speeds are drawn uniformly from this range.
    pub speed_range: (f64, f64),
    /// The target speed is redrawn every this many steps.
    pub speed_resample_steps: u32,
    /// New location targets spawn at a distance in this range.
    pub loc_spawn_dist: (f64, f64),
    /// Radius that counts as having arrived (reward saturates to 1 inside).
    pub arrive_radius: f64,
    /// Steps the target is held after arrival before it is resampled.
    pub arrive_hold_steps: u32,
    /// Targets are kept within this distance from the origin.
    pub loc_bound: f64,
}

impl TaskConfig {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            speed_range: (1.2, 6.8),
            speed_resample_steps: 150,
            loc_spawn_dist: (1.0, 3.0),
            arrive_radius: 0.3,
            arrive_hold_steps: 60,
            loc_bound: 10.0,
        }
    }
}

/// Task-dependent goal, carried alongside the environment state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    Speed(f64),
    /// World-frame target plus the number of steps spent inside the arrival
    /// radius (0 while approaching).
    Location {
        target: [f64; 2],
        held: u32,
    },
    None,
}

impl Goal {
    pub fn initial(cfg: &TaskConfig, state: &EnvState, rng: &mut impl Rng) -> Goal {
        match cfg.kind {
            TaskKind::TargetSpeed => {
                Goal::Speed(rng.gen_range(cfg.speed_range.0..cfg.speed_range.1))
            }
            TaskKind::TargetLocation => Goal::Location {
                target: sample_location_target(cfg, state.pos, rng),
                held: 0,
            },
            TaskKind::Imitation => Goal::None,
        }
    }

    /// Advance the goal bookkeeping after a step: resample the speed on its
    /// schedule, and resample the location after the post-arrival hold.
    pub fn advance(&self, cfg: &TaskConfig, state: &EnvState, rng: &mut impl Rng) -> Goal {
        match *self {
            Goal::Speed(v) => {
                if cfg.speed_resample_steps > 0 && state.step % cfg.speed_resample_steps == 0 {
                    Goal::Speed(rng.gen_range(cfg.speed_range.0..cfg.speed_range.1))
                } else {
                    Goal::Speed(v)
                }
            }
            Goal::Location { target, held } => {
                let dx = target[0] - state.pos[0];
                let dy = target[1] - state.pos[1];
                let dist = (dx * dx + dy * dy).sqrt();
                if dist <= cfg.arrive_radius {
                    let held = held + 1;
                    if held >= cfg.arrive_hold_steps {
                        Goal::Location {
                            target: sample_location_target(cfg, state.pos, rng),
                            held: 0,
                        }
                    } else {
                        Goal::Location { target, held }
                    }
                } else {
                    Goal::Location { target, held }
                }
            }
            Goal::None => Goal::None,
        }
    }

    /// Policy-visible goal features, expressed in the character's frame.
    pub fn features(&self, state: &EnvState, out: &mut [f64]) {
        match *self {
            Goal::Speed(v) => out[0] = v / 5.0,
            Goal::Location { target, .. } => {
                let dx = target[0] - state.pos[0];
                let dy = target[1] - state.pos[1];
                let (c, s) = (state.heading.cos(), state.heading.sin());
                out[0] = (c * dx + s * dy) / 5.0;
                out[1] = (-s * dx + c * dy) / 5.0;
            }
            Goal::None => {}
        }
    }
}

fn sample_location_target(cfg: &TaskConfig, from: [f64; 2], rng: &mut impl Rng) -> [f64; 2] {
    let dist = rng.gen_range(cfg.loc_spawn_dist.0..cfg.loc_spawn_dist.1);
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut target = [from[0] + dist * angle.cos(), from[1] + dist * angle.sin()];
    let r = (target[0] * target[0] + target[1] * target[1]).sqrt();
    if r > cfg.loc_bound {
        target[0] *= cfg.loc_bound / r;
        target[1] *= cfg.loc_bound / r;
    }
    target
}

/// Task reward in [0, 1].
pub fn task_reward(cfg: &TaskConfig, state: &EnvState, goal: &Goal) -> f64 {
    match *goal {
        Goal::Speed(v_star) => {
            let err = state.speed() - v_star;
            (-2.0 * err * err).exp()
        }
        Goal::Location { target, .. } => {
            let dx = target[0] - state.pos[0];
            let dy = target[1] - state.pos[1];
            let d2 = dx * dx + dy * dy;
            if d2.sqrt() <= cfg.arrive_radius {
                1.0
            } else {
                (-0.5 * d2).exp()
            }
        }
        Goal::None => 0.0,
    }
}

/// Uniform-random initial state for runs without generative initialization.
pub fn default_init_state(rng: &mut impl Rng) -> EnvState {
    let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let speed = rng.gen_range(0.0..3.0);
    let dir = heading_dir(heading);
    EnvState {
        pos: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        heading,
        vel: [speed * dir[0], speed * dir[1]],
        ang_vel: 0.0,
        limb_angle: [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
        limb_vel: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        step: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    #[test]
    fn zero_action_at_rest_is_equilibrium() {
        let params = EnvParams::default();
        let state = EnvState::at_rest();
        let next = env_step(&params, &state, &Action::default()).unwrap();
        assert_eq!(next.pos, state.pos);
        assert_eq!(next.vel, state.vel);
        assert_eq!(next.limb_angle, state.limb_angle);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn constant_force_without_drag_grows_speed_linearly() {
        let params = EnvParams {
            drag: 0.0,
            ..EnvParams::default()
        };
        let mut state = EnvState::at_rest();
        let action = Action {
            forward: 1.0,
            ..Action::default()
        };
        for t in 1..=30 {
            state = env_step(&params, &state, &action).unwrap();
            let expect = t as f64 * params.dt * params.force_max / params.mass;
            assert!((state.speed() - expect).abs() < 1e-12, "step {t}");
        }
    }

    /// Independent straight-line re-implementation of the update equations,
    /// kept deliberately separate from `env_step`.
    fn oracle_step(p: &EnvParams, s: &EnvState, a: &Action) -> EnvState {
        let af = a.forward.clamp(-1.0, 1.0);
        let at = a.turn.clamp(-1.0, 1.0);
        let al = [a.limb[0].clamp(-1.0, 1.0), a.limb[1].clamp(-1.0, 1.0)];
        let mut vx =
            s.vel[0] + p.dt * (af * p.force_max * s.heading.cos() - p.drag * s.vel[0]) / p.mass;
        let mut vy =
            s.vel[1] + p.dt * (af * p.force_max * s.heading.sin() - p.drag * s.vel[1]) / p.mass;
        let sp = (vx * vx + vy * vy).sqrt();
        if sp > p.speed_cap {
            vx *= p.speed_cap / sp;
            vy *= p.speed_cap / sp;
        }
        let px = s.pos[0] + p.dt * vx;
        let py = s.pos[1] + p.dt * vy;
        let w = s.ang_vel + p.dt * (at * p.turn_torque_max - p.turn_damp * s.ang_vel);
        let th = wrap_angle(s.heading + p.dt * w);
        let mut q = [0.0; 2];
        let mut qv = [0.0; 2];
        for k in 0..2 {
            let acc = al[k] * p.limb_torque_max
                - p.limb_damp * s.limb_vel[k]
                - p.limb_spring * s.limb_angle[k];
            qv[k] = s.limb_vel[k] + p.dt * acc;
            q[k] = s.limb_angle[k] + p.dt * qv[k];
            if q[k].abs() > std::f64::consts::PI {
                q[k] = q[k].clamp(-std::f64::consts::PI, std::f64::consts::PI);
                qv[k] = 0.0;
            }
        }
        EnvState {
            pos: [px, py],
            heading: th,
            vel: [vx, vy],
            ang_vel: w,
            limb_angle: q,
            limb_vel: qv,
            step: s.step + 1,
        }
    }

    #[test]
    fn rollout_matches_independent_integrator_bitwise() {
        let params = EnvParams::default();
        let mut rng = stream(3, Domain::EnvReset, 0);
        let mut a = default_init_state(&mut rng);
        let mut b = a;
        for _ in 0..100 {
            let action = Action {
                forward: rng.gen_range(-1.2..1.2),
                turn: rng.gen_range(-1.2..1.2),
                limb: [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)],
            };
            a = env_step(&params, &a, &action).unwrap();
            b = oracle_step(&params, &b, &action);
            assert_eq!(a.pos[0].to_bits(), b.pos[0].to_bits());
            assert_eq!(a.pos[1].to_bits(), b.pos[1].to_bits());
            assert_eq!(a.heading.to_bits(), b.heading.to_bits());
            assert_eq!(a.vel[0].to_bits(), b.vel[0].to_bits());
            assert_eq!(a.ang_vel.to_bits(), b.ang_vel.to_bits());
            assert_eq!(a.limb_angle[0].to_bits(), b.limb_angle[0].to_bits());
            assert_eq!(a.limb_vel[1].to_bits(), b.limb_vel[1].to_bits());
        }
    }

    #[test]
    fn limb_energy_is_non_increasing_without_torque() {
        let params = EnvParams::default();
        let mut state = EnvState {
            limb_angle: [1.2, -0.7],
            limb_vel: [0.5, 2.0],
            ..EnvState::at_rest()
        };
        let energy = |s: &EnvState| -> f64 {
            (0..2)
                .map(|k| {
                    0.5 * s.limb_vel[k] * s.limb_vel[k]
                        + 0.5 * params.limb_spring * s.limb_angle[k] * s.limb_angle[k]
                })
                .sum()
        };
        let mut prev = energy(&state);
        for _ in 0..300 {
            state = env_step(&params, &state, &Action::default()).unwrap();
            let e = energy(&state);
            assert!(e <= prev + 1e-12, "energy grew: {prev} -> {e}");
            prev = e;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn speed_reward_peaks_at_target() {
        let cfg = TaskConfig::new(TaskKind::TargetSpeed);
        let mut state = EnvState::at_rest();
        state.vel = [2.0, 0.0];
        assert!((task_reward(&cfg, &state, &Goal::Speed(2.0)) - 1.0).abs() < 1e-12);
        // 1 m/s of error costs exp(-2).
        let r = task_reward(&cfg, &state, &Goal::Speed(3.0));
        assert!((r - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn location_reward_saturates_inside_arrival_radius() {
        let cfg = TaskConfig::new(TaskKind::TargetLocation);
        let state = EnvState::at_rest();
        let goal = Goal::Location {
            target: [0.2, 0.1],
            held: 0,
        };
        assert_eq!(task_reward(&cfg, &state, &goal), 1.0);
        let far = Goal::Location {
            target: [2.0, 0.0],
            held: 0,
        };
        assert!((task_reward(&cfg, &state, &far) - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn location_goal_resamples_after_hold() {
        let cfg = TaskConfig {
            arrive_hold_steps: 2,
            ..TaskConfig::new(TaskKind::TargetLocation)
        };
        let mut rng = stream(1, Domain::Goal, 0);
        let state = EnvState::at_rest();
        let g0 = Goal::Location {
            target: [0.1, 0.0],
            held: 0,
        };
        let g1 = g0.advance(&cfg, &state, &mut rng);
        match g1 {
            Goal::Location { target, held } => {
                assert_eq!(target, [0.1, 0.0]);
                assert_eq!(held, 1);
            }
            _ => panic!(),
        }
        let g2 = g1.advance(&cfg, &state, &mut rng);
        match g2 {
            Goal::Location { target, held } => {
                assert_ne!(target, [0.1, 0.0]);
                assert_eq!(held, 0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn speed_goal_resamples_on_schedule() {
        let cfg = TaskConfig::new(TaskKind::TargetSpeed);
        let mut rng = stream(2, Domain::Goal, 0);
        let mut state = EnvState::at_rest();
        let g = Goal::Speed(2.0);
        state.step = 149;
        assert_eq!(g.advance(&cfg, &state, &mut rng), Goal::Speed(2.0));
        state.step = 150;
        assert_ne!(g.advance(&cfg, &state, &mut rng), Goal::Speed(2.0));
    }
}
