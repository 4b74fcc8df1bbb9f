//! ADAM optimizer over named parameter tensors.

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Adam<S: Scalar> {
    cfg: AdamConfig,
    params: Vec<(String, Tensor<S>)>,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    /// Per-parameter update counts; a parameter skipped while its gradient
    /// is absent must not have its bias correction advanced.
    param_steps: Vec<u64>,
    steps: u64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: Vec<(String, Tensor<S>)>, cfg: AdamConfig) -> Result<Self> {
        let mut names = BTreeSet::new();
        for (name, p) in &params {
            if !p.requires_grad() {
                return Err(Error::InvalidInput {
                    op: "adam",
                    message: format!("parameter '{name}' does not require gradients"),
                });
            }
            if !names.insert(name.clone()) {
                return Err(Error::InvalidInput {
                    op: "adam",
                    message: format!("duplicate parameter name '{name}'"),
                });
            }
        }
        let m = params.iter().map(|(_, p)| vec![S::zero(); p.len()]).collect();
        let v = params.iter().map(|(_, p)| vec![S::zero(); p.len()]).collect();
        let param_steps = vec![0; params.len()];
        Ok(Adam { cfg, params, m, v, param_steps, steps: 0 })
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// One update over every parameter that carries a gradient. Parameters
    /// without one are skipped untouched (their moments and bias-correction
    /// counts do not advance); a loss that only reaches part of the model,
    /// like the policy head between window boundaries, is legitimate.
    /// Returns how many parameters were updated.
    pub fn step(&mut self) -> Result<usize> {
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let one = S::one();
        let lr = S::from_f64(self.cfg.lr);
        let eps = S::from_f64(self.cfg.eps);
        let mut updated = 0;
        for (idx, (_, p)) in self.params.iter().enumerate() {
            let Some(grad) = p.grad() else { continue };
            let t = self.param_steps[idx] + 1;
            self.param_steps[idx] = t;
            let bc1 = one - b1.powi(t as i32);
            let bc2 = one - b2.powi(t as i32);
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            p.set_data_with(|data| {
                for i in 0..data.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    data[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            });
            updated += 1;
        }
        self.steps += 1;
        Ok(updated)
    }
}
