//! Ancestral sampling, classifier-free guidance, and eps-space composition.

use rand::Rng;

use super::{EpsPredictor, StyleDirective, StyleLabel};
use crate::error::{Result, SmpError};
use crate::rng::fill_normal;

/// Intermediate samples are clamped to this band (z-normalized space) to
/// guard against rare divergence of ancestral sampling with a small model.
pub const SAMPLE_CLAMP: f64 = 6.0;

/// Binary mask over the flattened window features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMask {
    values: Vec<f64>,
}

impl FeatureMask {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(SmpError::Input("mask entries must be 0 or 1".into()));
        }
        Ok(Self { values })
    }

    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The pair must cover every coordinate exactly once.
    pub fn check_partition(a: &FeatureMask, b: &FeatureMask) -> Result<()> {
        if a.len() != b.len() {
            return Err(SmpError::Input("mask lengths differ".into()));
        }
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            if x + y != 1.0 || x * y != 0.0 {
                return Err(SmpError::Input("masks are not a partition".into()));
            }
        }
        Ok(())
    }
}

/// Mask pair splitting the features into (root + limb 1) and (limb 2),
/// per frame: the planar analogue of upper/lower-body masks.
pub fn limb_split_masks(window_frames: usize) -> (FeatureMask, FeatureMask) {
    use crate::env::features::{idx, FEATURE_DIM};
    let limb2 = [
        idx::LIMB2_COS,
        idx::LIMB2_SIN,
        idx::LIMB2_VEL,
        idx::TIP2_X,
        idx::TIP2_Y,
    ];
    let mut b = vec![0.0; window_frames * FEATURE_DIM];
    for frame in 0..window_frames {
        for &k in &limb2 {
            b[frame * FEATURE_DIM + k] = 1.0;
        }
    }
    let mask_b = FeatureMask::new(b).unwrap();
    let mask_a = mask_b.complement();
    (mask_a, mask_b)
}

/// Classifier-free guidance:
/// `f(x, null) + w_cfg * (f(x, c) - f(x, null))`.
///
/// `w_cfg = 1` short-circuits to the conditional prediction alone.
pub fn cfg_predict_into(
    model: &impl EpsPredictor,
    x: &[f64],
    i: usize,
    style: usize,
    w_cfg: f64,
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    if w_cfg == 1.0 {
        model.predict(x, i, StyleLabel::Id(style), out);
        return Ok(());
    }
    model.predict(x, i, StyleLabel::Null, out);
    model.predict(x, i, StyleLabel::Id(style), scratch);
    for (o, c) in out.iter_mut().zip(scratch.iter()) {
        *o += w_cfg * (c - *o);
    }
    Ok(())
}

pub fn cfg_predict(
    model: &impl EpsPredictor,
    x: &[f64],
    i: usize,
    style: StyleLabel,
    w_cfg: f64,
) -> Result<Vec<f64>> {
    let s = style
        .id()
        .ok_or_else(|| SmpError::Input("guidance needs a concrete style label".into()))?;
    let mut out = vec![0.0; model.window_dim()];
    let mut scratch = vec![0.0; model.window_dim()];
    cfg_predict_into(model, x, i, s, w_cfg, &mut out, &mut scratch)?;
    Ok(out)
}

/// Blend two style-conditioned predictions through a disjoint mask pair:
/// `mask_a * f(x, c_a) + mask_b * f(x, c_b)`.
#[allow(clippy::too_many_arguments)]
pub fn compose_styles_into(
    model: &impl EpsPredictor,
    x: &[f64],
    i: usize,
    style_a: StyleLabel,
    style_b: StyleLabel,
    mask_a: &FeatureMask,
    mask_b: &FeatureMask,
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    FeatureMask::check_partition(mask_a, mask_b)?;
    if mask_a.len() != x.len() {
        return Err(SmpError::Input("mask length does not match window".into()));
    }
    model.predict(x, i, style_a, out);
    model.predict(x, i, style_b, scratch);
    for (k, o) in out.iter_mut().enumerate() {
        *o = mask_a.values[k] * *o + mask_b.values[k] * scratch[k];
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn compose_styles(
    model: &impl EpsPredictor,
    x: &[f64],
    i: usize,
    style_a: StyleLabel,
    style_b: StyleLabel,
    mask_a: &FeatureMask,
    mask_b: &FeatureMask,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.window_dim()];
    let mut scratch = vec![0.0; model.window_dim()];
    compose_styles_into(
        model,
        x,
        i,
        style_a,
        style_b,
        mask_a,
        mask_b,
        &mut out,
        &mut scratch,
    )?;
    Ok(out)
}

/// Ancestral DDPM sampling from step N down to 1 under a style directive.
/// Returns a z-normalized window.
///
/// The posterior mean is computed through the denoised estimate
/// `x0_hat = (x - sqrt(1 - a_bar) eps_hat) / sqrt(a_bar)`. Because the data
/// is z-normalized (unit prior variance) and the predictor reports its own
/// per-step residual, the estimate is Wiener-weighted by
/// `1 / (1 + residual * (1 - a_bar) / a_bar)` before use: at high noise a
/// small model cannot cancel `x` precisely, and the raw estimate would feed
/// its error back into the trajectory multiplicatively. Estimates are also
/// clamped to the normalized data range.
pub fn sample_reverse_directed(
    model: &impl EpsPredictor,
    directive: &StyleDirective,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let dim = model.window_dim();
    let schedule = model.schedule();
    let mut x = vec![0.0; dim];
    fill_normal(rng, &mut x);
    let mut eps_hat = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut noise = vec![0.0; dim];

    for i in (1..=schedule.n).rev() {
        directive.predict_eps(model, &x, i, &mut eps_hat, &mut scratch)?;
        let beta = schedule.beta(i);
        let alpha = schedule.alpha(i);
        let ab = schedule.alpha_bar(i);
        let sqrt_ab = ab.sqrt();
        let noise_scale = (1.0 - ab).sqrt();
        // A well-trained eps predictor already returns the posterior mean,
        // whose residual floor for unit-variance data is a_bar; only the
        // excess above that floor is estimator noise. It shrinks the
        // denoised estimate (Wiener weight against the unit z-space prior)
        // and re-enters the step noise so marginals stay dispersed.
        let excess = (model.prediction_residual(i) - ab).max(0.0);
        let resid_var = excess * (1.0 - ab) / ab;
        let trust = 1.0 / (1.0 + resid_var);
        let x0_var = resid_var / (1.0 + resid_var);
        if i > 1 {
            let ab_prev = schedule.alpha_bar(i - 1);
            let x0_coef = ab_prev.sqrt() * beta / (1.0 - ab);
            let x_coef = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
            let sigma =
                (beta * (1.0 - ab_prev) / (1.0 - ab) + x0_coef * x0_coef * x0_var).sqrt();
            fill_normal(rng, &mut noise);
            for k in 0..dim {
                let x0_hat = (trust * (x[k] - noise_scale * eps_hat[k]) / sqrt_ab)
                    .clamp(-SAMPLE_CLAMP, SAMPLE_CLAMP);
                let mean = x0_coef * x0_hat + x_coef * x[k];
                x[k] = (mean + sigma * noise[k]).clamp(-SAMPLE_CLAMP, SAMPLE_CLAMP);
            }
        } else {
            fill_normal(rng, &mut noise);
            let sigma = x0_var.sqrt();
            for k in 0..dim {
                let x0_hat = (trust * (x[k] - noise_scale * eps_hat[k]) / sqrt_ab)
                    .clamp(-SAMPLE_CLAMP, SAMPLE_CLAMP);
                x[k] = (x0_hat + sigma * noise[k]).clamp(-SAMPLE_CLAMP, SAMPLE_CLAMP);
            }
        }
    }
    Ok(x)
}

/// Sampling with plain CFG conditioning (`c = Null` gives the unconditional
/// model).
pub fn sample_reverse(
    model: &impl EpsPredictor,
    style: StyleLabel,
    w_cfg: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let directive = match style {
        StyleLabel::Null => StyleDirective::Unconditional,
        StyleLabel::Id(s) => StyleDirective::Cfg { style: s, w_cfg },
    };
    sample_reverse_directed(model, &directive, rng)
}
