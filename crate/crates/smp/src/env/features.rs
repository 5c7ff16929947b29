//! Motion features in the character's local coordinate frame.
//!
//! A feature frame holds, per simulation state: root linear velocity (2) and
//! angular velocity (1) in the local frame, limb angles as (cos, sin) pairs
//! (4), limb angular velocities (2), and limb-tip positions (4) relative to
//! the window anchor. Every frame of a window is expressed in the frame
//! defined by the *last* state's root position and heading, which makes the
//! features invariant to global translation and rotation.

use super::{limb_tip_world, EnvParams, EnvState};

/// Floats per feature frame.
pub const FEATURE_DIM: usize = 13;

/// Frames per motion window (the diffusion variable is `H * FEATURE_DIM`).
pub const WINDOW_FRAMES: usize = 10;

pub const WINDOW_DIM: usize = WINDOW_FRAMES * FEATURE_DIM;

/// Feature layout within a frame.
pub mod idx {
    pub const VEL_X: usize = 0;
    pub const VEL_Y: usize = 1;
    pub const ANG_VEL: usize = 2;
    pub const LIMB1_COS: usize = 3;
    pub const LIMB1_SIN: usize = 4;
    pub const LIMB2_COS: usize = 5;
    pub const LIMB2_SIN: usize = 6;
    pub const LIMB1_VEL: usize = 7;
    pub const LIMB2_VEL: usize = 8;
    pub const TIP1_X: usize = 9;
    pub const TIP1_Y: usize = 10;
    pub const TIP2_X: usize = 11;
    pub const TIP2_Y: usize = 12;
}

/// Write the features of `state`, expressed in the frame anchored at
/// `anchor` (root position and heading of the window's last state).
pub fn frame_features(params: &EnvParams, state: &EnvState, anchor: &EnvState, out: &mut [f64]) {
    assert_eq!(out.len(), FEATURE_DIM);
    let (c, s) = (anchor.heading.cos(), anchor.heading.sin());
    // Rotation by -anchor.heading.
    let rot = |v: [f64; 2]| -> [f64; 2] { [c * v[0] + s * v[1], -s * v[0] + c * v[1]] };

    let v = rot(state.vel);
    out[idx::VEL_X] = v[0];
    out[idx::VEL_Y] = v[1];
    out[idx::ANG_VEL] = state.ang_vel;
    out[idx::LIMB1_COS] = state.limb_angle[0].cos();
    out[idx::LIMB1_SIN] = state.limb_angle[0].sin();
    out[idx::LIMB2_COS] = state.limb_angle[1].cos();
    out[idx::LIMB2_SIN] = state.limb_angle[1].sin();
    out[idx::LIMB1_VEL] = state.limb_vel[0];
    out[idx::LIMB2_VEL] = state.limb_vel[1];
    for limb in 0..2 {
        let tip = limb_tip_world(params, state, limb);
        let rel = rot([tip[0] - anchor.pos[0], tip[1] - anchor.pos[1]]);
        out[idx::TIP1_X + 2 * limb] = rel[0];
        out[idx::TIP1_Y + 2 * limb] = rel[1];
    }
}

/// Extract the feature window for a run of consecutive states, all expressed
/// in the last state's frame. `states.len()` frames are produced.
pub fn extract_features(params: &EnvParams, states: &[EnvState]) -> Vec<f64> {
    assert!(
        !states.is_empty(),
        "feature extraction needs at least one state"
    );
    let anchor = states.last().unwrap();
    let mut out = vec![0.0; states.len() * FEATURE_DIM];
    for (j, state) in states.iter().enumerate() {
        frame_features(
            params,
            state,
            anchor,
            &mut out[j * FEATURE_DIM..(j + 1) * FEATURE_DIM],
        );
    }
    out
}

/// Recover limb angles from a frame's (cos, sin) features.
pub fn limb_angles_from_frame(frame: &[f64]) -> [f64; 2] {
    [
        frame[idx::LIMB1_SIN].atan2(frame[idx::LIMB1_COS]),
        frame[idx::LIMB2_SIN].atan2(frame[idx::LIMB2_COS]),
    ]
}
