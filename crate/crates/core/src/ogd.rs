//! Projected online gradient descent, the proper first-order baseline.

use crate::error::{Error, Result};
use crate::math::{grad_loss, log_loss, softmax, FeatureVector, LabelDistribution, Logits, WeightMatrix};

#[derive(Debug, Clone)]
pub struct OgdState {
    w: WeightMatrix,
    t: u64,
    b: f64,
    r: f64,
    step_scale: f64,
}

impl OgdState {
    pub fn new(d: usize, k: usize, b: f64, r: f64) -> Result<Self> {
        if d == 0 || k < 2 {
            return Err(Error::config("OGD needs d ≥ 1 and K ≥ 2"));
        }
        if !(b > 0.0 && r > 0.0 && b.is_finite() && r.is_finite()) {
            return Err(Error::config("OGD needs positive finite B and R"));
        }
        Ok(OgdState { w: WeightMatrix::zeros(k, d), t: 0, b, r, step_scale: 1.0 })
    }

    pub fn with_step_scale(mut self, scale: f64) -> Self {
        self.step_scale = scale;
        self
    }

    /// Starts from `w` instead of zero; rows are clipped to radius `B`.
    pub fn with_weights(mut self, mut w: WeightMatrix) -> Result<Self> {
        if w.classes() != self.w.classes() || w.dim() != self.w.dim() {
            return Err(Error::input("initial weights have the wrong shape"));
        }
        w.clip_rows(self.b);
        self.w = w;
        Ok(self)
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.w
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    /// Plays `z = W x`, then takes a step of size `η_t = scale · B/(R√t)` and
    /// projects every row back onto the radius-`B` ball.
    pub fn step(&mut self, x: &FeatureVector, y: &LabelDistribution) -> Result<(Logits, f64)> {
        if x.norm() > self.r * (1.0 + 1e-12) {
            return Err(Error::input(format!("feature norm {} exceeds R = {}", x.norm(), self.r)));
        }
        let z = self.w.apply(x)?;
        let loss = log_loss(&z, y)?;
        let g = grad_loss(&softmax(&z), y, x)?;
        self.t += 1;
        let eta = self.step_scale * self.b / (self.r * (self.t as f64).sqrt());
        let next = self.w.vectorize() - g * eta;
        self.w = WeightMatrix::from_vectorized(self.w.classes(), self.w.dim(), &next)?;
        self.w.clip_rows(self.b);
        Ok((z, loss))
    }
}
