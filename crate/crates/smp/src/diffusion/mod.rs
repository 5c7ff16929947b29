//! DDPM over motion windows.
//!
//! The diffusion variable is a z-normalized window of `H` consecutive
//! feature frames (see [`crate::env::features`]). The denoiser predicts the
//! noise added by the forward process; sampling, classifier-free guidance,
//! and style composition all reduce to different ways of combining its
//! predictions.

pub mod denoiser;
pub mod sample;
pub mod schedule;
pub mod train;

pub use denoiser::{DenoiserConfig, DenoiserModel};
pub use sample::{
    cfg_predict, compose_styles, limb_split_masks, sample_reverse, sample_reverse_directed,
    FeatureMask,
};
pub use schedule::{build_schedule, forward_diffuse, forward_diffuse_into, NoiseSchedule};
pub use train::{ddpm_loss, holdout_split, train_prior, TrainPriorConfig};

use crate::error::{Result, SmpError};

/// Discrete style condition; `Null` is the unconditional token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StyleLabel {
    Null,
    Id(usize),
}

impl StyleLabel {
    pub fn id(&self) -> Option<usize> {
        match self {
            StyleLabel::Null => None,
            StyleLabel::Id(s) => Some(*s),
        }
    }
}

/// Anything that can predict the noise component of a diffused window.
///
/// The trained [`DenoiserModel`] is the production implementation; tests use
/// stubs with closed-form predictions.
pub trait EpsPredictor: Sync {
    fn window_dim(&self) -> usize;
    fn schedule(&self) -> &NoiseSchedule;
    /// Predict `eps` for the noisy window `x` at diffusion step `i`.
    fn predict(&self, x: &[f64], i: usize, style: StyleLabel, out: &mut [f64]);
    /// Content hash of the parameters, for frozen-model contracts.
    fn digest(&self) -> String {
        "unparameterized".into()
    }
    /// Number of concrete styles the predictor accepts; stubs accept any.
    fn style_count(&self) -> usize {
        usize::MAX
    }
    /// Mean per-dimension squared prediction error at step `i`, measured on
    /// training data. Sampling uses it to weight the denoised estimate; 0
    /// means the prediction is trusted fully.
    fn prediction_residual(&self, _i: usize) -> f64 {
        0.0
    }
}

/// How a prior conditions the denoiser.
#[derive(Debug, Clone, PartialEq)]
pub enum StyleDirective {
    Unconditional,
    /// Classifier-free guidance toward one style.
    Cfg {
        style: usize,
        w_cfg: f64,
    },
    /// Blend two styles in eps-space through a disjoint feature-mask pair.
    Composed {
        style_a: usize,
        style_b: usize,
        mask_a: FeatureMask,
        mask_b: FeatureMask,
    },
}

impl StyleDirective {
    /// Evaluate the directed eps prediction into `out`. `scratch` must be
    /// `window_dim` long and is clobbered.
    pub fn predict_eps(
        &self,
        model: &impl EpsPredictor,
        x: &[f64],
        i: usize,
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        match self {
            StyleDirective::Unconditional => {
                model.predict(x, i, StyleLabel::Null, out);
                Ok(())
            }
            StyleDirective::Cfg { style, w_cfg } => {
                sample::cfg_predict_into(model, x, i, *style, *w_cfg, out, scratch)
            }
            StyleDirective::Composed {
                style_a,
                style_b,
                mask_a,
                mask_b,
            } => sample::compose_styles_into(
                model,
                x,
                i,
                StyleLabel::Id(*style_a),
                StyleLabel::Id(*style_b),
                mask_a,
                mask_b,
                out,
                scratch,
            ),
        }
    }

    pub fn validate_for(&self, model: &impl EpsPredictor) -> Result<()> {
        self.validate(model.style_count(), model.window_dim())
    }

    pub fn validate(&self, style_count: usize, window_dim: usize) -> Result<()> {
        let check_style = |s: usize| -> Result<()> {
            if s >= style_count {
                Err(SmpError::Config(format!(
                    "style index {s} out of range (model has {style_count} styles)"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            StyleDirective::Unconditional => Ok(()),
            StyleDirective::Cfg { style, .. } => check_style(*style),
            StyleDirective::Composed {
                style_a,
                style_b,
                mask_a,
                mask_b,
            } => {
                check_style(*style_a)?;
                check_style(*style_b)?;
                if mask_a.len() != window_dim || mask_b.len() != window_dim {
                    return Err(SmpError::Config("mask length does not match window".into()));
                }
                FeatureMask::check_partition(mask_a, mask_b)
            }
        }
    }
}
