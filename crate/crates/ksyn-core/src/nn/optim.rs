//! Adam with bias correction, and parameter EMA.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::nn::{Scalar, Tensor4};

/// Adam hyperparameters. `lr` is the only field without a standard
/// default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Result of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A non-finite gradient was seen; parameters were left untouched and
    /// the skip counter incremented.
    SkippedNonFinite,
}

/// Adam state: one pair of moment buffers per parameter tensor, aligned
/// with the model's parameter enumeration order.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub params: AdamParams,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step_count: u64,
    skipped: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: AdamParams) -> Self {
        Self {
            params,
            m: Vec::new(),
            v: Vec::new(),
            step_count: 0,
            skipped: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn skipped_steps(&self) -> u64 {
        self.skipped
    }

    /// Moments as flat slices, for checkpointing.
    pub fn state(&self) -> (&[Vec<F>], &[Vec<F>]) {
        (&self.m, &self.v)
    }

    pub fn restore_state(&mut self, m: Vec<Vec<F>>, v: Vec<Vec<F>>, step_count: u64, skipped: u64) {
        self.m = m;
        self.v = v;
        self.step_count = step_count;
        self.skipped = skipped;
    }

    /// One update over the given parameter tensors. The whole step is
    /// skipped if any gradient element is non-finite.
    pub fn step(&mut self, tensors: &mut [&mut Tensor4<F>]) -> StepOutcome {
        if self.m.is_empty() {
            self.m = tensors.iter().map(|t| vec![F::zero(); t.len()]).collect();
            self.v = tensors.iter().map(|t| vec![F::zero(); t.len()]).collect();
        }
        debug_assert_eq!(self.m.len(), tensors.len(), "parameter set changed size");

        for t in tensors.iter() {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    self.skipped += 1;
                    return StepOutcome::SkippedNonFinite;
                }
            }
        }

        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.params.beta1.powf(t);
        let bc2 = 1.0 - self.params.beta2.powf(t);
        let lr = F::from_f64_c(self.params.lr);
        let b1 = F::from_f64_c(self.params.beta1);
        let b2 = F::from_f64_c(self.params.beta2);
        let one_m_b1 = F::from_f64_c(1.0 - self.params.beta1);
        let one_m_b2 = F::from_f64_c(1.0 - self.params.beta2);
        let inv_bc1 = F::from_f64_c(1.0 / bc1);
        let inv_bc2 = F::from_f64_c(1.0 / bc2);
        let eps = F::from_f64_c(self.params.eps);

        for (slot, tensor) in tensors.iter_mut().enumerate() {
            let Some(grad) = tensor.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            debug_assert_eq!(m.len(), grad.len());
            let data = tensor.data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_m_b1 * g;
                v[i] = b2 * v[i] + one_m_b2 * g * g;
                let m_hat = m[i] * inv_bc1;
                let v_hat = v[i] * inv_bc2;
                data[i] = data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        StepOutcome::Applied
    }
}

/// Exponential moving average of parameter tensors:
/// `shadow ← d·shadow + (1−d)·params`.
#[derive(Debug, Clone)]
pub struct Ema<F> {
    decay: f64,
    shadow: Vec<Vec<F>>,
}

impl<F: Scalar> Ema<F> {
    pub fn new(decay: f64, params: &[&Tensor4<F>]) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(invalid("Ema", alloc::format!("decay must lie in [0,1), got {decay}")));
        }
        Ok(Self {
            decay,
            shadow: params.iter().map(|t| t.data().to_vec()).collect(),
        })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn shadow(&self) -> &[Vec<F>] {
        &self.shadow
    }

    pub fn restore(&mut self, shadow: Vec<Vec<F>>) {
        self.shadow = shadow;
    }

    pub fn update(&mut self, params: &[&Tensor4<F>]) {
        debug_assert_eq!(self.shadow.len(), params.len());
        let d = F::from_f64_c(self.decay);
        let one_m_d = F::from_f64_c(1.0 - self.decay);
        for (s, p) in self.shadow.iter_mut().zip(params) {
            for (si, &pi) in s.iter_mut().zip(p.data()) {
                *si = d * *si + one_m_d * pi;
            }
        }
    }

    /// Overwrite `params` with the shadow values (for EMA-weight
    /// inference on a cloned model).
    pub fn apply_to(&self, params: &mut [&mut Tensor4<F>]) {
        debug_assert_eq!(self.shadow.len(), params.len());
        for (s, p) in self.shadow.iter().zip(params.iter_mut()) {
            p.data_mut().copy_from_slice(s);
        }
    }
}
