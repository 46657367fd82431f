//! Adam optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Parameter, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<Real>,
    v: Vec<Real>,
}

/// Per-parameter moment buffers plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Applies one bias-corrected Adam update to every trainable parameter
    /// and zeroes their gradients.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Parameter>,
    {
        let params: Vec<&mut Parameter> = params.into_iter().filter(|p| p.trainable).collect();
        if let Some(p) = params.iter().find(|p| p.tensor.grad().is_none()) {
            return Err(Error::MissingGrad(p.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (beta1 as Real, beta2 as Real);
        for p in params {
            let n = p.tensor.numel();
            let mom = self.moments.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            if mom.m.len() != n {
                return Err(Error::shape("adam", "moment buffer", n, mom.m.len()));
            }
            let (data, grad) = p.tensor.data_and_grad_mut();
            let grad = grad.expect("checked above");
            for i in 0..n {
                let g = grad[i];
                mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
                mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
                let m_hat = mom.m[i] as f64 / bc1;
                let v_hat = mom.v[i] as f64 / bc2;
                data[i] -= (learning_rate * m_hat / (v_hat.sqrt() + epsilon)) as Real;
                grad[i] = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(v: Real) -> Parameter {
        let mut p = Parameter::new("w", Tensor::from_vec(&[1], vec![v]).unwrap());
        p.tensor.ensure_grad();
        p
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_param(0.7);
        let mut adam = AdamState::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step([&mut p]).unwrap();
        }
        assert_eq!(p.tensor.data()[0], 0.7);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = Parameter::new("w", Tensor::zeros(&[2]));
        let mut adam = AdamState::new(AdamConfig::default());
        assert!(matches!(adam.step([&mut p]), Err(Error::MissingGrad(n)) if n == "w"));
    }

    #[test]
    fn frozen_parameters_are_skipped() {
        let mut p = Parameter::new("w", Tensor::zeros(&[2]));
        p.trainable = false;
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step([&mut p]).unwrap();
    }

    #[test]
    fn single_step_hand_oracle() {
        // m = 0.1 g, v = 0.001 g^2; after bias correction m_hat = g,
        // v_hat = g^2, so the step is lr * g / (|g| + eps).
        let g: Real = 2.5;
        let mut p = scalar_param(1.0);
        p.tensor.grad_mut().unwrap()[0] = g;
        let mut adam = AdamState::new(AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        });
        adam.step([&mut p]).unwrap();
        let expected = 1.0 - 0.1 * 2.5 / (2.5 + 1e-8);
        assert!((p.tensor.data()[0] as f64 - expected).abs() < 1e-12);
        assert_eq!(p.tensor.grad().unwrap()[0], 0.0);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // Adam oscillates around the minimum of w^2 at this rate, so the
        // monotone quantity is the envelope of |w| over 20-step windows.
        let mut p = scalar_param(1.0);
        let mut adam = AdamState::new(AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        });
        let mut trace = Vec::new();
        for _ in 0..200 {
            let w = p.tensor.data()[0];
            p.tensor.grad_mut().unwrap()[0] = 2.0 * w;
            adam.step([&mut p]).unwrap();
            trace.push(p.tensor.data()[0].abs());
        }
        let envelope: Vec<Real> = trace
            .chunks(20)
            .map(|c| c.iter().cloned().fold(0.0, Real::max))
            .collect();
        assert!(envelope.windows(2).all(|w| w[1] < w[0]), "{envelope:?}");
        assert!(*envelope.last().unwrap() < 1e-3);
        assert!(trace[150..].iter().all(|&w| w < 1e-3));
    }
}
