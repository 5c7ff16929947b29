//! Adam with bias correction over flat parameter arrays.

use std::io::{Read, Write};

use crate::error::{Result, SmpError};
use crate::wire;

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        assert_eq!(
            params.len(),
            self.m.len(),
            "optimizer state length mismatch"
        );
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        self.step += 1;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(SmpError::Training {
                step: self.step,
                message: "non-finite gradient".into(),
            });
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        wire::write_u64(w, self.step)?;
        wire::write_f64(w, self.beta1)?;
        wire::write_f64(w, self.beta2)?;
        wire::write_f64(w, self.epsilon)?;
        wire::write_f64_slice(w, &self.m)?;
        wire::write_f64_slice(w, &self.v)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let step = wire::read_u64(r)?;
        let beta1 = wire::read_f64(r)?;
        let beta2 = wire::read_f64(r)?;
        let epsilon = wire::read_f64(r)?;
        let m = wire::read_f64_slice(r)?;
        let v = wire::read_f64_slice(r)?;
        if m.len() != v.len() {
            return Err(SmpError::Format("optimizer moment arrays disagree".into()));
        }
        Ok(Self {
            beta1,
            beta2,
            epsilon,
            m,
            v,
            step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        adam.step(&mut params, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_evaluated_recurrence() {
        // g = 1, lr = 0.1, defaults: m1 = 0.1, v1 = 0.001,
        // m_hat = 1, v_hat = 1, delta = -0.1 / (1 + 1e-8).
        let mut adam = Adam::new(1);
        let mut params = vec![0.0];
        adam.step(&mut params, &[1.0], 0.1).unwrap();
        let expect = -0.1 / (1.0 + 1e-8);
        assert!((params[0] - expect).abs() < 1e-15);
        assert!((params[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_is_a_training_error() {
        let mut adam = Adam::new(1);
        let mut params = vec![0.0];
        let err = adam.step(&mut params, &[f64::NAN], 0.1).unwrap_err();
        match err {
            SmpError::Training { step, .. } => assert_eq!(step, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut adam = Adam::new(2);
            let mut params = vec![0.3, -0.3];
            for k in 0..100 {
                let g = [params[0] * 2.0 + k as f64 * 1e-3, params[1].sin()];
                adam.step(&mut params, &g, 0.01).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn state_round_trips_through_bytes() {
        let mut adam = Adam::new(2);
        let mut params = vec![0.5, 1.5];
        adam.step(&mut params, &[0.1, -0.2], 0.05).unwrap();
        let mut buf = Vec::new();
        adam.write(&mut buf).unwrap();
        let back = Adam::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back.step_count(), 1);
        assert_eq!(back.m, adam.m);
        assert_eq!(back.v, adam.v);
    }
}
