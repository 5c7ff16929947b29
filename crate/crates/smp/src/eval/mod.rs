//! Evaluation toolkit: alignment error, distribution distance, style
//! classification, and reward-variance ablations.

pub mod ablation;
pub mod classifier;
pub mod dtw;
pub mod mmd;
pub mod plot;
pub mod report;

pub use ablation::{ablation_ensemble_vs_random, AblationReport};
pub use classifier::{
    classify_style, classify_trajectory, classify_window, measure_limb_series, measure_limb_window,
    LimbMeasure, StyleVerdict,
};
pub use dtw::{dtw_align, AlignmentResult};
pub use mmd::mmd;
pub use plot::line_plot_svg;
pub use report::{prior_report, sds_error_curve, PriorReport};

use crate::env::{limb_tip_world, EnvParams, EnvState};

/// Tracked points of one frame: root plus both limb tips, expressed
/// relative to the trajectory's initial root pose.
pub type FramePoints = [[f64; 2]; 3];

/// Convert a state trajectory into tracked-point frames relative to its own
/// initial position and heading, so trajectories with different global
/// poses are comparable.
pub fn trajectory_points(env: &EnvParams, states: &[EnvState]) -> Vec<FramePoints> {
    assert!(!states.is_empty());
    let origin = states[0].pos;
    let (c, s) = (states[0].heading.cos(), states[0].heading.sin());
    let rel = |p: [f64; 2]| -> [f64; 2] {
        let dx = p[0] - origin[0];
        let dy = p[1] - origin[1];
        [c * dx + s * dy, -s * dx + c * dy]
    };
    states
        .iter()
        .map(|state| {
            [
                rel(state.pos),
                rel(limb_tip_world(env, state, 0)),
                rel(limb_tip_world(env, state, 1)),
            ]
        })
        .collect()
}

/// Mean distance over the tracked points of two frames.
pub fn frame_distance(a: &FramePoints, b: &FramePoints) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| {
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            (dx * dx + dy * dy).sqrt()
        })
        .sum::<f64>()
        / 3.0
}

/// DTW-aligned mean position tracking error between a simulated trajectory
/// and a reference, both expressed in their own initial frames.
pub fn imitation_error(env: &EnvParams, simulated: &[EnvState], reference: &[EnvState]) -> f64 {
    let a = trajectory_points(env, simulated);
    let b = trajectory_points(env, reference);
    dtw_align(&a, &b, frame_distance).mean_cost
}
