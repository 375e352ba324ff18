use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::FeatureVector;

/// Hard ceiling on solver iterations, whatever the configuration says.
pub const MAX_SOLVER_ITERATIONS: usize = 1_000_000;

/// Relative slack allowed when checking `‖x‖₂ ≤ R`.
const FEATURE_NORM_SLACK: f64 = 1e-12;

/// Dimensions and constants for one learner instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Input dimension `d`.
    pub d: usize,
    /// Number of classes `K`.
    pub k: usize,
    /// Comparator bound `B` on the largest row norm.
    pub b: f64,
    /// Feature norm bound `R`.
    pub r: f64,
    /// Ridge weight `λ`; `2R/B` unless overridden.
    pub lambda: f64,
    /// Target squared error `ε` of the prediction solver.
    pub eps: f64,
    /// Replaces the derived solver iteration count when set.
    pub max_iters: Option<usize>,
    /// Re-invert the curvature matrix densely every this many updates.
    pub reinvert_every: Option<u64>,
}

impl LearnerConfig {
    pub fn new(d: usize, k: usize, b: f64, r: f64) -> Self {
        LearnerConfig { d, k, b, r, lambda: 2.0 * r / b, eps: 1e-12, max_iters: None, reinvert_every: None }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.max_iters = Some(iters);
        self
    }

    pub fn with_reinvert_every(mut self, every: u64) -> Self {
        self.reinvert_every = Some(every);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::config("d must be at least 1"));
        }
        if self.k < 2 {
            return Err(Error::config("K must be at least 2"));
        }
        for (name, v) in [("B", self.b), ("R", self.r), ("lambda", self.lambda), ("eps", self.eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.reinvert_every == Some(0) {
            return Err(Error::config("reinvert_every must be positive"));
        }
        Ok(())
    }

    /// Dimension `Kd` of the vectorized parameter.
    pub fn dim(&self) -> usize {
        self.k * self.d
    }

    /// The surrogate curvature scale `1 / (BR + ln(K)/2)`.
    pub fn curvature_scale(&self) -> f64 {
        1.0 / (self.b * self.r + (self.k as f64).ln() / 2.0)
    }

    /// Smoothness bound `1 + R²/λ` of the preconditioned prediction problem.
    pub fn smoothness(&self) -> f64 {
        1.0 + self.r * self.r / self.lambda
    }

    pub fn solver_step(&self) -> f64 {
        1.0 / self.smoothness()
    }

    /// Gradient steps needed for `‖ẑ − z‖² ≤ ε`:
    /// `⌈κ · ln(κ³/ε)⌉` with `κ = 1 + R²/λ`, unless `max_iters` overrides it.
    pub fn solver_iterations(&self) -> usize {
        let n = match self.max_iters {
            Some(n) => n,
            None => {
                let kappa = self.smoothness();
                let n = (kappa * (kappa.powi(3) / self.eps).ln()).ceil();
                if n.is_finite() && n > 0.0 {
                    n.min(MAX_SOLVER_ITERATIONS as f64) as usize
                } else {
                    0
                }
            }
        };
        n.min(MAX_SOLVER_ITERATIONS)
    }

    /// Rejects features of the wrong length or with `‖x‖₂ > R`.
    pub fn check_feature(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::input(format!("feature has dimension {}, expected {}", x.len(), self.d)));
        }
        let n = x.norm();
        if n > self.r * (1.0 + FEATURE_NORM_SLACK) {
            return Err(Error::input(format!("feature norm {n} exceeds R = {}", self.r)));
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the fields that shape the learner state.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.d as u64).to_le_bytes());
        h.update((self.k as u64).to_le_bytes());
        for v in [self.b, self.r, self.lambda] {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(first)
    }
}

/// The explicit regret bound `K(2BR + (BR + ln(K)/2) · d · ln(1 + T))`.
pub fn regret_bound(d: usize, k: usize, b: f64, r: f64, t: f64) -> f64 {
    let kf = k as f64;
    kf * (2.0 * b * r + (b * r + kf.ln() / 2.0) * d as f64 * (1.0 + t).ln())
}
