//! Adam with decoupled weight decay.

// required for float math in pure no_std builds; redundant (and flagged
// unused) when a dependency links std and exposes the inherent methods
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use crate::tensor::{Real, Tensor};

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Tensor<F>,
    v: Tensor<F>,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient contained NaN/Inf; the step was skipped entirely.
    SkippedNonFinite,
}

pub struct Adam<F: Real> {
    config: AdamConfig,
    states: Vec<AdamState<F>>,
    t: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        let states = shapes
            .iter()
            .map(|&(r, c)| AdamState { m: Tensor::zeros(r, c), v: Tensor::zeros(r, c) })
            .collect();
        Adam { config, states, t: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Update `params` in place. `grads[i] == None` means parameter `i`
    /// received no gradient this step (its moments still decay).
    pub fn step(&mut self, params: &mut [&mut Tensor<F>], grads: &[Option<&Tensor<F>>]) -> StepOutcome {
        assert_eq!(params.len(), self.states.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.states.len(), "gradient count mismatch");
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return StepOutcome::SkippedNonFinite;
            }
        }
        self.t += 1;
        let b1 = F::from_f64(self.config.beta1);
        let b2 = F::from_f64(self.config.beta2);
        let one = F::one();
        let lr = F::from_f64(self.config.lr);
        let eps = F::from_f64(self.config.eps);
        let wd = F::from_f64(self.config.weight_decay);
        let bc1 = F::from_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.config.beta2.powi(self.t as i32));
        for ((param, state), grad) in params.iter_mut().zip(&mut self.states).zip(grads) {
            if wd != F::zero() {
                for p in param.data_mut() {
                    *p -= lr * wd * *p;
                }
            }
            let Some(grad) = grad else { continue };
            assert_eq!(param.shape(), grad.shape(), "gradient shape mismatch");
            for ((p, g), (m, v)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(state.m.data_mut().iter_mut().zip(state.v.data_mut()))
            {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        StepOutcome::Applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_grad_zero_decay_leaves_params() {
        let mut p = Tensor::from_vec(1, 2, vec![1.0f64, -2.0]);
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.0), &[(1, 2)]);
        let g = Tensor::zeros(1, 2);
        opt.step(&mut [&mut p], &[Some(&g)]);
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // closed form: with zero state, m_hat = g, v_hat = g^2, so the
        // first update is lr * g / (|g| + eps) ~= lr.
        let mut p = Tensor::scalar(0.0f64);
        let mut opt = Adam::new(AdamConfig::new(0.01, 0.0), &[(1, 1)]);
        let g = Tensor::scalar(1.0);
        opt.step(&mut [&mut p], &[Some(&g)]);
        assert!((p.item() + 0.01).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut p = Tensor::scalar(1.0f64);
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.5), &[(1, 1)]);
        let g = Tensor::scalar(f64::NAN);
        let outcome = opt.step(&mut [&mut p], &[Some(&g)]);
        assert_eq!(outcome, StepOutcome::SkippedNonFinite);
        assert_eq!(p.item(), 1.0);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut p = Tensor::scalar(2.0f64);
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.5), &[(1, 1)]);
        let g = Tensor::scalar(0.0);
        opt.step(&mut [&mut p], &[Some(&g)]);
        // decay only: p -= lr * wd * p
        assert!((p.item() - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }
}
