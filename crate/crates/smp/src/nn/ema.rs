//! Exponential moving average of model parameters.

use crate::error::{Result, SmpError};

/// Shadow copy of a parameter array, advanced as
/// `shadow = decay * shadow + (1 - decay) * params`.
///
/// Initialized from the live parameters so the shadow is always a convex
/// combination of historical parameter values.
#[derive(Debug, Clone)]
pub struct EmaShadow {
    pub decay: f64,
    pub values: Vec<f64>,
}

impl EmaShadow {
    pub fn new(decay: f64, params: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(SmpError::Config(format!(
                "EMA decay {decay} outside [0, 1]"
            )));
        }
        Ok(Self {
            decay,
            values: params.to_vec(),
        })
    }

    pub fn update(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.values.len(), "EMA length mismatch");
        let d = self.decay;
        for (s, &p) in self.values.iter_mut().zip(params.iter()) {
            *s = d * *s + (1.0 - d) * p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_zero_copies_params() {
        let mut ema = EmaShadow::new(0.0, &[5.0]).unwrap();
        ema.update(&[2.0]);
        assert_eq!(ema.values, vec![2.0]);
    }

    #[test]
    fn decay_one_freezes_shadow() {
        let mut ema = EmaShadow::new(1.0, &[5.0]).unwrap();
        ema.update(&[2.0]);
        assert_eq!(ema.values, vec![5.0]);
    }

    #[test]
    fn half_decay_follows_unrolled_recurrence() {
        // shadow = 0, params = 2: updates give 1.0 then 1.5.
        let mut ema = EmaShadow {
            decay: 0.5,
            values: vec![0.0],
        };
        ema.update(&[2.0]);
        assert_eq!(ema.values, vec![1.0]);
        ema.update(&[2.0]);
        assert_eq!(ema.values, vec![1.5]);
    }

    #[test]
    fn shadow_stays_in_convex_hull_of_history() {
        let mut ema = EmaShadow::new(0.9, &[1.0]).unwrap();
        let history = [1.0, 3.0, -2.0, 0.5, 4.0];
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for &p in &history {
            ema.update(&[p]);
            lo = lo.min(p);
            hi = hi.max(p);
            assert!(ema.values[0] >= lo - 1e-12 && ema.values[0] <= hi + 1e-12);
        }
    }
}
