//! AdamW with global gradient-norm clipping.

use crate::scalar::Scalar;
use crate::tensor::array::DenseArray;
use crate::tensor::params::{ParamId, ParamStore};

/// Optimizer hyperparameters. Defaults follow the training recipe used
/// throughout this crate: constant learning rate, Adam betas (0.9, 0.999),
/// gradients clipped to a maximum global norm of 0.1.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4, max_grad_norm: 0.1 }
    }
}

/// Errors from an optimizer step.
#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("non-finite gradient for parameter {0:?}")]
    NonFiniteGrad(String),
}

/// Accumulates per-parameter gradients across samples of a batch.
pub struct GradBuffer<T> {
    grads: Vec<Option<DenseArray<T>>>,
}

impl<T: Scalar> GradBuffer<T> {
    pub fn new(param_count: usize) -> Self {
        Self { grads: (0..param_count).map(|_| None).collect() }
    }

    /// Add a gradient contribution for one parameter.
    pub fn add(&mut self, id: ParamId, g: &DenseArray<T>) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// Merge another buffer into this one (used for batch reduction).
    pub fn merge(&mut self, other: &GradBuffer<T>) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    /// Scale every stored gradient (e.g. by 1/batch).
    pub fn scale(&mut self, s: T) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&DenseArray<T>> {
        self.grads[id.0].as_ref()
    }

    /// Global L2 norm over all stored gradients, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0f64;
        for g in self.grads.iter().flatten() {
            for &x in g.data() {
                let x = x.to_f64_lossy();
                sq += x * x;
            }
        }
        sq.sqrt()
    }
}

/// AdamW state (first/second moments per parameter, step counter).
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    m: Vec<DenseArray<T>>,
    v: Vec<DenseArray<T>>,
    t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(store: &ParamStore<T>, cfg: AdamWConfig) -> Self {
        let m = store.ids().map(|id| DenseArray::zeros(store.value(id).shape())).collect();
        let v = store.ids().map(|id| DenseArray::zeros(store.value(id).shape())).collect();
        Self { cfg, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update. Gradients are clipped to `max_grad_norm` (global L2,
    /// computed before any update), then each trainable parameter gets a
    /// bias-corrected Adam step plus decoupled weight decay.
    ///
    /// Returns the pre-clip global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &mut GradBuffer<T>) -> Result<f64, OptimError> {
        for id in store.ids() {
            if let Some(g) = grads.get(id) {
                if g.data().iter().any(|x| !x.is_finite()) {
                    return Err(OptimError::NonFiniteGrad(store.name(id).to_string()));
                }
            }
        }
        let norm = grads.global_norm();
        if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
            grads.scale(T::from_f64_lossy(self.cfg.max_grad_norm / norm));
        }
        self.t += 1;
        let t = self.t as i32;
        let b1 = T::from_f64_lossy(self.cfg.beta1);
        let b2 = T::from_f64_lossy(self.cfg.beta2);
        let lr = T::from_f64_lossy(self.cfg.lr);
        let eps = T::from_f64_lossy(self.cfg.eps);
        let wd = T::from_f64_lossy(self.cfg.weight_decay);
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let g = g.clone();
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.value_mut(id);
            for i in 0..p.len() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + (one - b1) * gi;
                let vi = b2 * v.data()[i] + (one - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                let x = p.data()[i];
                p.data_mut()[i] = x - lr * (mhat / (vhat.sqrt() + eps) + wd * x);
            }
        }
        Ok(norm)
    }
}
