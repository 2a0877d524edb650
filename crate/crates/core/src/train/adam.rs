//! Adam with L2 weight decay folded into the gradient.

use crate::error::{Error, Result};
use crate::numkit::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    skipped: u64,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64, weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Adam { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros(), v: zeros(), t: 0, skipped: 0 }
    }

    /// Updates taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates refused because of non-finite gradients.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// One update. Returns `Ok(false)` and leaves everything untouched when
    /// any gradient entry is NaN or infinite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!(
                    "tensor {i}: parameter {}, gradient {}, state {}",
                    p.shape_str(),
                    g.shape_str(),
                    self.m[i].shape_str()
                )));
            }
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            self.skipped += 1;
            log::warn!("non-finite gradient in tensor {i}; skipping optimizer step {}", self.t + 1);
            return Ok(false);
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let p = p.data_mut();
            for (j, &gj) in g.data().iter().enumerate() {
                let gj = gj + self.weight_decay * p[j];
                let mj = &mut m.data_mut()[j];
                *mj = b1 * *mj + (1.0 - b1) * gj;
                let mhat = *mj / c1;
                let vj = &mut v.data_mut()[j];
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
                let vhat = *vj / c2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(true)
    }
}
