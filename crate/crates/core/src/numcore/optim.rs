use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        Adam {
            config,
            step: 0,
            m: params.values().iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.values().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in params.values().iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!("gradient {:?} for parameter {:?}", g.shape(), p.shape())));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.values_mut().iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Tensor::from_vec(vec![value]));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = single(1.5);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        for _ in 0..10 {
            opt.step(&mut p, &[Tensor::from_vec(vec![0.0])]).unwrap();
        }
        assert_eq!(p.values()[0].item(), 1.5);
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_sign() {
        for g in [0.3, -2.0] {
            let mut p = single(0.0);
            let mut opt = Adam::new(AdamConfig::default(), &p);
            let mut last = 0.0;
            for _ in 0..200 {
                opt.step(&mut p, &[Tensor::from_vec(vec![g])]).unwrap();
                let now = p.values()[0].item();
                assert!((now - last) * g < 0.0);
                last = now;
            }
        }
    }

    #[test]
    fn first_step_matches_scalar_reference() {
        // hand-rolled scalar Adam, first step from zeroed moments
        let (lr, b1, b2, eps, g, w0) = (1e-3, 0.9, 0.999, 1e-8, 0.7_f64, 2.0);
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let expect = w0 - lr * (m / (1.0 - b1)) / ((v / (1.0 - b2)).sqrt() + eps);

        let mut p = single(w0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[Tensor::from_vec(vec![g])]).unwrap();
        assert!((p.values()[0].item() - expect).abs() < 1e-15);
        // first step magnitude is lr regardless of gradient scale
        assert!((w0 - expect - lr).abs() < 1e-10);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut p = single(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(opt.step(&mut p, &[Tensor::from_vec(vec![0.0, 1.0])]).is_err());
        assert!(opt.step(&mut p, &[]).is_err());
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut g = vec![Tensor::from_vec(vec![3.0]), Tensor::from_vec(vec![4.0])];
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        let after: f64 = g.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }
}
