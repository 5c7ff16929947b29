//! Rule-based gait style classification.
//!
//! Styles are identified by per-limb oscillation statistics matched against
//! the generator's analytic parameters. Trajectories (seconds of motion) use
//! zero-crossing frequency estimates; short feature windows use a harmonic
//! fit on the (angle, angular velocity) orbit instead, since they cover less
//! than one stride.

use crate::env::dataset::{StyleParams, STYLES};
use crate::env::features::{idx, FEATURE_DIM};

/// Oscillation below this amplitude counts as a rigid (held) limb.
pub const RIGID_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct LimbMeasure {
    pub frequency: f64,
    pub amplitude: f64,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct StyleVerdict {
    /// Overall predicted style (index into the generator's style table).
    pub style: usize,
    pub per_limb_style: [usize; 2],
    pub limbs: [LimbMeasure; 2],
}

/// Zero-crossing frequency and moment statistics of one limb-angle series.
pub fn measure_limb_series(angles: &[f64], fps: f64) -> LimbMeasure {
    assert!(angles.len() >= 2);
    let n = angles.len() as f64;
    let offset = angles.iter().sum::<f64>() / n;
    let var = angles
        .iter()
        .map(|q| (q - offset) * (q - offset))
        .sum::<f64>()
        / n;
    // For a sinusoid, var = A^2 / 2.
    let amplitude = (2.0 * var).sqrt();
    let mut crossings = 0usize;
    for pair in angles.windows(2) {
        if (pair[0] - offset).signum() != (pair[1] - offset).signum() {
            crossings += 1;
        }
    }
    let duration = (angles.len() - 1) as f64 / fps;
    let frequency = if amplitude < RIGID_AMPLITUDE {
        0.0
    } else {
        crossings as f64 / (2.0 * duration)
    };
    LimbMeasure {
        frequency,
        amplitude,
        offset,
    }
}

fn nearest_style(measure: &LimbMeasure) -> usize {
    if measure.amplitude < RIGID_AMPLITUDE {
        // Rigid rule: match against the held styles by offset alone.
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, style) in STYLES.iter().enumerate() {
            if style.amplitude < RIGID_AMPLITUDE {
                let d = (measure.offset - style.offset).abs();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
        }
        return best;
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, style) in STYLES.iter().enumerate() {
        let d = dist_to_style(measure, style);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn dist_to_style(measure: &LimbMeasure, style: &StyleParams) -> f64 {
    let da = measure.amplitude - style.amplitude;
    let doff = measure.offset - style.offset;
    (da * da + doff * doff).sqrt()
}

fn verdict_from_measures(limbs: [LimbMeasure; 2]) -> StyleVerdict {
    let per_limb_style = [nearest_style(&limbs[0]), nearest_style(&limbs[1])];
    let style = if per_limb_style[0] == per_limb_style[1] {
        per_limb_style[0]
    } else {
        // Disagreement: trust the limb closer to its matched style.
        let d0 = dist_to_style(&limbs[0], &STYLES[per_limb_style[0]]);
        let d1 = dist_to_style(&limbs[1], &STYLES[per_limb_style[1]]);
        if d0 <= d1 {
            per_limb_style[0]
        } else {
            per_limb_style[1]
        }
    };
    StyleVerdict {
        style,
        per_limb_style,
        limbs,
    }
}

/// Classify a limb-angle trajectory (two series, seconds of motion).
pub fn classify_style(limb_angles: &[Vec<f64>; 2], fps: f64) -> StyleVerdict {
    let limbs = [
        measure_limb_series(&limb_angles[0], fps),
        measure_limb_series(&limb_angles[1], fps),
    ];
    verdict_from_measures(limbs)
}

/// Classify the states of a rollout.
pub fn classify_trajectory(states: &[crate::env::EnvState], fps: f64) -> StyleVerdict {
    let q1: Vec<f64> = states.iter().map(|s| s.limb_angle[0]).collect();
    let q2: Vec<f64> = states.iter().map(|s| s.limb_angle[1]).collect();
    classify_style(&[q1, q2], fps)
}

/// Harmonic measurement of one limb from a short feature window: fits
/// `q_ddot = -w^2 (q - offset)` by least squares over interior frames and
/// reads the amplitude off the phase-space orbit
/// `A^2 = (q - offset)^2 + (q_dot / w)^2`.
pub fn measure_limb_window(window: &[f64], limb: usize, fps: f64) -> LimbMeasure {
    let frames = window.len() / FEATURE_DIM;
    assert!(frames >= 4, "window too short for a harmonic fit");
    let (cos_i, sin_i, vel_i) = match limb {
        0 => (idx::LIMB1_COS, idx::LIMB1_SIN, idx::LIMB1_VEL),
        _ => (idx::LIMB2_COS, idx::LIMB2_SIN, idx::LIMB2_VEL),
    };
    let q: Vec<f64> = (0..frames)
        .map(|j| {
            let f = &window[j * FEATURE_DIM..(j + 1) * FEATURE_DIM];
            f[sin_i].atan2(f[cos_i])
        })
        .collect();
    let qd: Vec<f64> = (0..frames)
        .map(|j| window[j * FEATURE_DIM + vel_i])
        .collect();

    let mean_q = q.iter().sum::<f64>() / frames as f64;
    let std_q = (q.iter().map(|v| (v - mean_q) * (v - mean_q)).sum::<f64>() / frames as f64).sqrt();
    let mean_abs_qd = qd.iter().map(|v| v.abs()).sum::<f64>() / frames as f64;
    if std_q < 0.03 && mean_abs_qd < 0.3 {
        return LimbMeasure {
            frequency: 0.0,
            amplitude: std_q * std::f64::consts::SQRT_2,
            offset: mean_q,
        };
    }

    // Central-difference accelerations on interior frames.
    let dt = 1.0 / fps;
    let mut xs = Vec::with_capacity(frames - 2);
    let mut ys = Vec::with_capacity(frames - 2);
    for j in 1..frames - 1 {
        xs.push(q[j]);
        ys.push((qd[j + 1] - qd[j - 1]) / (2.0 * dt));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / n;
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / n;
    let slope = if var > 1e-12 { cov / var } else { 0.0 };

    if slope >= -1e-9 {
        // No restoring force detected; fall back to moment statistics.
        return LimbMeasure {
            frequency: 0.0,
            amplitude: std_q * std::f64::consts::SQRT_2,
            offset: mean_q,
        };
    }
    let omega2 = -slope;
    let omega = omega2.sqrt();
    let offset = my / omega2 + mx;
    let amp2 = (0..frames)
        .map(|j| {
            let dq = q[j] - offset;
            let dv = qd[j] / omega;
            dq * dq + dv * dv
        })
        .sum::<f64>()
        / frames as f64;
    LimbMeasure {
        frequency: omega / (2.0 * std::f64::consts::PI),
        amplitude: amp2.sqrt(),
        offset,
    }
}

/// Classify one feature window (raw, de-normalized units).
pub fn classify_window(window: &[f64], fps: f64) -> StyleVerdict {
    let limbs = [
        measure_limb_window(window, 0, fps),
        measure_limb_window(window, 1, fps),
    ];
    verdict_from_measures(limbs)
}
