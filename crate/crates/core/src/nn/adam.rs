use std::collections::BTreeMap;

use super::layers::Param;
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Moments<T: Real> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Adam optimizer state: per-parameter moments keyed by parameter name.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One bias-corrected Adam update of every parameter from its `grad`.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let corr1 = 1.0 - c.beta1.powi(t);
        let corr2 = 1.0 - c.beta2.powi(t);
        for p in params.iter_mut() {
            if p.grad.shape() != p.value.shape() {
                return Err(Error::invalid(format!(
                    "adam: gradient of `{}` has shape {:?}, parameter {:?}",
                    p.name,
                    p.grad.shape(),
                    p.value.shape()
                )));
            }
            let mom = self.moments.entry(p.name.clone()).or_insert_with(|| Moments {
                m: Tensor::zeros(p.value.shape()),
                v: Tensor::zeros(p.value.shape()),
            });
            if mom.m.shape() != p.value.shape() {
                return Err(Error::invalid(format!(
                    "adam: moment shape mismatch for `{}`",
                    p.name
                )));
            }
            let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
            let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
            let step_size = T::lit(c.lr / corr1);
            let inv_corr2 = T::lit(1.0 / corr2);
            let eps = T::lit(c.eps);
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for (((w, &g), m), v) in values
                .iter_mut()
                .zip(grads)
                .zip(mom.m.data_mut())
                .zip(mom.v.data_mut())
            {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *w = *w - step_size * *m / ((*v * inv_corr2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(vals: &[f64]) -> Param<f64> {
        Param::new("p", Tensor::new(&[vals.len()], vals.to_vec()).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = param(&[1.0, -2.0, 3.0]);
        let mut s = AdamState::new(AdamConfig::default());
        s.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn constant_gradient_moves_lr_per_step() {
        let mut p = param(&[0.0, 0.0]);
        p.grad.data_mut().copy_from_slice(&[3.0, -0.5]);
        let mut s = AdamState::new(AdamConfig::default());
        let mut prev = p.value.data().to_vec();
        for i in 0..5000 {
            s.step(&mut [&mut p]).unwrap();
            let delta: Vec<f64> = p.value.data().iter().zip(&prev).map(|(a, b)| a - b).collect();
            if i == 0 || i > 4000 {
                // m̂ = g and v̂ = g² exactly in the steady state; step 1 is exact too
                assert!((delta[0] + 2e-4).abs() < 1e-9, "step {i}: {delta:?}");
                assert!((delta[1] - 2e-4).abs() < 1e-9, "step {i}: {delta:?}");
            }
            prev = p.value.data().to_vec();
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = param(&[0.3, 0.1]);
            p.grad.data_mut().copy_from_slice(&[0.7, -0.2]);
            let mut s = AdamState::new(AdamConfig::default());
            s.step(&mut [&mut p]).unwrap();
            s.step(&mut [&mut p]).unwrap();
            p.value
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = param(&[1.0]);
        p.grad = Tensor::zeros(&[2]);
        assert!(AdamState::new(AdamConfig::default()).step(&mut [&mut p]).is_err());
    }
}
