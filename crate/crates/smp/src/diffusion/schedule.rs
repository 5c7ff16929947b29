//! Noise schedule and forward diffusion.

use crate::error::{Result, SmpError};

/// Cosine-schedule offset.
const COSINE_S: f64 = 0.008;

/// Upper clamp on per-step betas. The raw cosine tail at N = 50 reaches
/// beta ~ 1, and every reverse step then amplifies prediction error by
/// 1/sqrt(1 - beta); capping keeps ancestral sampling stable for a small
/// model while the terminal signal level stays under 1%.
pub const BETA_MAX: f64 = 0.25;

/// Per-step noise levels. Arrays are stored 0-indexed; the accessors take
/// the 1-based diffusion step `i` used in the formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub n: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    #[inline]
    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i - 1]
    }

    #[inline]
    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i - 1]
    }

    #[inline]
    pub fn alpha_bar(&self, i: usize) -> f64 {
        self.alpha_bar[i - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn from_betas(beta: Vec<f64>) -> Result<NoiseSchedule> {
        if beta.len() < 2 {
            return Err(SmpError::Config(format!(
                "noise schedule needs at least 2 steps, got {}",
                beta.len()
            )));
        }
        if beta.iter().any(|&b| !(0.0 < b && b < 1.0)) {
            return Err(SmpError::Config("beta values must lie in (0, 1)".into()));
        }
        let n = beta.len();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(n);
        let mut prod = 1.0;
        for a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        Ok(NoiseSchedule {
            n,
            beta,
            alpha,
            alpha_bar,
        })
    }
}

/// Cosine schedule: `alpha_bar(i)` tracks `cos^2(((i/N + s)/(1 + s)) * pi/2)`
/// normalized to start at 1, with betas clamped to (0, 0.999].
pub fn build_schedule(n: usize) -> Result<NoiseSchedule> {
    if n < 2 {
        return Err(SmpError::Config(format!(
            "diffusion step count {n} must be >= 2"
        )));
    }
    let f = |i: usize| -> f64 {
        let x = (i as f64 / n as f64 + COSINE_S) / (1.0 + COSINE_S);
        let c = (x * std::f64::consts::FRAC_PI_2).cos();
        c * c
    };
    let mut beta = Vec::with_capacity(n);
    for i in 1..=n {
        let b = 1.0 - f(i) / f(i - 1);
        beta.push(b.clamp(1e-8, BETA_MAX));
    }
    let schedule = NoiseSchedule::from_betas(beta)?;
    debug_assert!(schedule.alpha_bar.windows(2).all(|w| w[1] < w[0]));
    Ok(schedule)
}

/// Jump directly to noise level `i`: `x_i = sqrt(a_bar_i) x0 + sqrt(1 - a_bar_i) eps`.
pub fn forward_diffuse(
    schedule: &NoiseSchedule,
    x0: &[f64],
    i: usize,
    eps: &[f64],
) -> Result<Vec<f64>> {
    if i < 1 || i > schedule.n {
        return Err(SmpError::Input(format!(
            "diffusion step {i} outside [1, {}]",
            schedule.n
        )));
    }
    if eps.len() != x0.len() {
        return Err(SmpError::Input(
            "noise shape does not match sample shape".into(),
        ));
    }
    let ab = schedule.alpha_bar(i);
    let signal = ab.sqrt();
    let noise = (1.0 - ab).sqrt();
    Ok(x0
        .iter()
        .zip(eps.iter())
        .map(|(x, e)| signal * x + noise * e)
        .collect())
}

/// In-place variant for hot paths.
pub fn forward_diffuse_into(
    schedule: &NoiseSchedule,
    x0: &[f64],
    i: usize,
    eps: &[f64],
    out: &mut [f64],
) {
    let ab = schedule.alpha_bar(i);
    let signal = ab.sqrt();
    let noise = (1.0 - ab).sqrt();
    for ((o, x), e) in out.iter_mut().zip(x0.iter()).zip(eps.iter()) {
        *o = signal * x + noise * e;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_normal, stream, Domain};

    #[test]
    fn schedule_of_fifty_steps_holds_invariants() {
        let s = build_schedule(50).unwrap();
        assert_eq!(s.n, 50);
        for i in 1..=50 {
            assert!(s.beta(i) > 0.0 && s.beta(i) < 1.0);
            assert!(s.alpha_bar(i) > 0.0 && s.alpha_bar(i) < 1.0);
            if i > 1 {
                assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
            }
        }
        assert!(s.alpha_bar(50) < 0.01);
    }

    #[test]
    fn first_alpha_bar_is_one_minus_first_beta() {
        for n in [2, 5, 50, 200] {
            let s = build_schedule(n).unwrap();
            assert!((s.alpha_bar(1) - (1.0 - s.beta(1))).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_steps_is_a_configuration_error() {
        assert!(matches!(build_schedule(0), Err(crate::SmpError::Config(_))));
        assert!(matches!(build_schedule(1), Err(crate::SmpError::Config(_))));
    }

    #[test]
    fn four_step_cosine_matches_independent_evaluation() {
        // Oracle: direct evaluation of the cosine alpha-bar formula with the
        // same clamping rule, written out step by step.
        let n = 4usize;
        let f = |i: usize| {
            ((i as f64 / n as f64 + 0.008) / 1.008 * std::f64::consts::PI / 2.0)
                .cos()
                .powi(2)
        };
        let mut expect = Vec::new();
        let mut prod = 1.0;
        for i in 1..=n {
            let b = (1.0 - f(i) / f(i - 1)).clamp(1e-8, 0.25);
            prod *= 1.0 - b;
            expect.push(prod);
        }
        let s = build_schedule(4).unwrap();
        for i in 1..=4 {
            assert!((s.alpha_bar(i) - expect[i - 1]).abs() < 1e-14, "step {i}");
        }
    }

    #[test]
    fn noiseless_diffusion_scales_by_sqrt_alpha_bar() {
        let s = build_schedule(50).unwrap();
        let x0 = vec![1.0, -2.0, 0.5];
        let eps = vec![0.0; 3];
        let xi = forward_diffuse(&s, &x0, 7, &eps).unwrap();
        let scale = s.alpha_bar(7).sqrt();
        for (a, b) in xi.iter().zip(x0.iter()) {
            assert!((a - b * scale).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_signal_diffusion_scales_noise() {
        let s = build_schedule(50).unwrap();
        let x0 = vec![0.0; 4];
        let eps = vec![1.0, 2.0, -1.0, 0.25];
        let xi = forward_diffuse(&s, &x0, 13, &eps).unwrap();
        let scale = (1.0 - s.alpha_bar(13)).sqrt();
        for (a, e) in xi.iter().zip(eps.iter()) {
            assert!((a - e * scale).abs() < 1e-15);
        }
    }

    #[test]
    fn diffusion_is_linear_in_the_signal() {
        let s = build_schedule(30).unwrap();
        let x0 = vec![0.3, -1.1, 2.2];
        let scaled: Vec<f64> = x0.iter().map(|v| 3.5 * v).collect();
        let eps = vec![0.0; 3];
        let a = forward_diffuse(&s, &x0, 11, &eps).unwrap();
        let b = forward_diffuse(&s, &scaled, 11, &eps).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((y - 3.5 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_step_is_an_input_error() {
        let s = build_schedule(10).unwrap();
        assert!(forward_diffuse(&s, &[0.0], 0, &[0.0]).is_err());
        assert!(forward_diffuse(&s, &[0.0], 11, &[0.0]).is_err());
    }

    #[test]
    fn terminal_step_variance_is_near_unit_for_unit_variance_signal() {
        // Monte-Carlo variance estimate over 10^4 unit-variance samples.
        let s = build_schedule(50).unwrap();
        let mut rng = stream(4, Domain::Sampling, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let count = 10_000;
        let mut x0 = vec![0.0; 1];
        let mut eps = vec![0.0; 1];
        for _ in 0..count {
            fill_normal(&mut rng, &mut x0);
            fill_normal(&mut rng, &mut eps);
            let xi = forward_diffuse(&s, &x0, 50, &eps).unwrap();
            sum += xi[0];
            sum_sq += xi[0] * xi[0];
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
    }
}
