use std::collections::HashMap;

use crate::autodiff::ParameterStore;
use crate::error::{Error, Result};

/// Which update rule an [`Optimizer`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

/// First-order optimizer with per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    alpha: f64,
    eps: f64,
    step: u64,
    first: HashMap<String, Vec<f64>>,
    second: HashMap<String, Vec<f64>>,
}

impl Optimizer {
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    /// RMSProp with smoothing α = 0.99, ε = 1e-8.
    pub fn rmsprop(lr: f64) -> Self {
        Self::new(OptimizerKind::RmsProp, lr)
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            alpha: 0.99,
            eps: 1e-8,
            step: 0,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `params`.
    ///
    /// Nothing is modified if any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut ParameterStore) -> Result<()> {
        if let Some((name, _)) = params
            .iter()
            .find(|(_, p)| p.requires_grad() && p.grad().iter().any(|g| !g.is_finite()))
        {
            return Err(Error::NonFiniteGrad(name.to_string()));
        }
        self.step += 1;
        let t = self.step as i32;
        for (name, p) in params.iter_mut() {
            if !p.requires_grad() {
                continue;
            }
            let n = p.len();
            let sq = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; n]);
            match self.kind {
                OptimizerKind::Adam => {
                    let m = self
                        .first
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; n]);
                    let bc1 = 1.0 - self.beta1.powi(t);
                    let bc2 = 1.0 - self.beta2.powi(t);
                    let grad = p.grad().to_vec();
                    for ((w, g), (m, v)) in p
                        .values_mut()
                        .iter_mut()
                        .zip(&grad)
                        .zip(m.iter_mut().zip(sq.iter_mut()))
                    {
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
                OptimizerKind::RmsProp => {
                    let grad = p.grad().to_vec();
                    for ((w, g), v) in p.values_mut().iter_mut().zip(&grad).zip(sq.iter_mut()) {
                        *v = self.alpha * *v + (1.0 - self.alpha) * g * g;
                        *w -= self.lr * g / (v.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
