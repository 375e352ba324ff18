//! The improper FTRL learner for online multiclass logistic regression.
//!
//! Each round the learner plays `z_t = W_t x_t` where `W_t` minimizes
//!
//! ```text
//! λ‖W‖²_F + Σ_{s<t} ℓ̂_s(W) + φ_t(W)
//!   = ‖W⃗‖²_{A_{t−1}} + ⟨W⃗, G_{t−1} − 2S_{t−1}⟩ + φ_t(W) + const,
//! ℓ̂_s(W) = ℓ_s(W_s) + ⟨W⃗ − W⃗_s, ∇ℓ_s(W_s)⟩ + c ‖W⃗ − W⃗_s‖²_{∇²ℓ_s(W_s)},
//! φ_t(W)  = (1/K) Σ_k ℓ(Wx_t, k) + ⟨W⃗, B_t⟩,
//! B_t     = (1/K) 1_K ⊗ x_t − ½ A_{t−1} diag⊗(A_{t−1}⁻¹)(1_K ⊗ x_t),
//! ```
//!
//! with `A`, `G` and `S` as kept by [`PdState`].
//!
//! `W_t` is never formed. Its scores solve the `K`-dimensional fixed point
//! `z = g̃ − Ã σ(z)`, the optimality condition of a 1-strongly convex problem
//! after preconditioning by `Ã^{-1/2}`. With `κ = 1 + R²/λ` bounding its
//! smoothness, `⌈κ ln(κ³/ε)⌉` gradient steps of size `1/κ` started at
//! `Ã^{-1/2} g̃` reach squared error `ε`.
//!
//! The iteration is run in score space: substituting `z = Ã^{1/2} z̃` turns the
//! preconditioned step into `z ← z − (z − g̃ + Ã σ(z)) / κ` started at `g̃`,
//! which needs no matrix square roots and stays well defined when `Ã` is
//! nearly singular.

use nalgebra::{DMatrix, DVector};

use crate::config::LearnerConfig;
use crate::error::{Error, Result};
use crate::math::{
    grad_loss, kron, log_loss, log_sum_exp, softmax, softmax_covariance, softmax_into, FeatureVector,
    LabelDistribution, Logits, WeightMatrix,
};
use crate::pd_state::PdState;

/// Below this largest eigenvalue of `Ã` the solver returns `g̃` directly.
pub const DEGENERATE_CURVATURE: f64 = 1e-12;

/// Round context carried from [`Folklore::predict`] to [`Folklore::observe`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSnapshot {
    pub x: FeatureVector,
    pub z_hat: Logits,
    pub sigma: LabelDistribution,
    pub iterations_used: usize,
    round: u64,
}

impl PredictionSnapshot {
    /// Number of completed rounds of the state this snapshot was taken from.
    pub fn round(&self) -> u64 {
        self.round
    }
}

#[derive(Debug, Clone)]
pub struct Folklore {
    config: LearnerConfig,
    state: PdState,
}

impl Folklore {
    pub fn new(config: LearnerConfig) -> Result<Self> {
        let state = PdState::init(&config)?;
        Ok(Folklore { config, state })
    }

    /// Resumes from a checkpoint written by [`PdState::to_bytes`].
    pub fn from_checkpoint(config: LearnerConfig, bytes: &[u8]) -> Result<Self> {
        let state = PdState::from_bytes(bytes, &config)?;
        Ok(Folklore { config, state })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn state(&self) -> &PdState {
        &self.state
    }

    /// Computes the improper prediction for `x` without changing the state.
    pub fn predict(&self, x: &FeatureVector) -> Result<PredictionSnapshot> {
        self.config.check_feature(x)?;
        let (a_tilde, g_tilde) = self.state.reduce(x);
        let (z, iterations_used) = if x.iter().all(|&v| v == 0.0) {
            (g_tilde, 0)
        } else {
            let top = a_tilde
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return Err(Error::numerical("eigendecomposition of the reduced curvature failed"));
            }
            if top < DEGENERATE_CURVATURE {
                (g_tilde, 0)
            } else {
                let iters = self.config.solver_iterations();
                (solve_fixed_point(&a_tilde, &g_tilde, self.config.solver_step(), iters), iters)
            }
        };
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("prediction solver produced a non-finite score"));
        }
        let z_hat = Logits::new_unchecked(z);
        let sigma = softmax(&z_hat);
        Ok(PredictionSnapshot { x: x.clone(), z_hat, sigma, iterations_used, round: self.state.rounds() })
    }

    /// Suffers `ℓ(ẑ, y)` and folds the round into the state. The gradient,
    /// curvature and curvature anchor are all taken at the computed scores `ẑ`.
    pub fn observe(&mut self, snap: &PredictionSnapshot, y: &LabelDistribution) -> Result<f64> {
        if snap.round != self.state.rounds() {
            return Err(Error::protocol(format!(
                "snapshot from round {} applied to state at round {}",
                snap.round,
                self.state.rounds()
            )));
        }
        if y.len() != self.config.k {
            return Err(Error::input(format!("label has {} classes, expected {}", y.len(), self.config.k)));
        }
        let loss = log_loss(&snap.z_hat, y)?;
        let g = grad_loss(&snap.sigma, y, &snap.x)?;
        self.state.woodbury_update(&snap.sigma, &snap.x)?;
        self.state.accumulate_anchor(&snap.sigma, &snap.x, &snap.z_hat)?;
        self.state.accumulate_gradient(&g)?;
        Ok(loss)
    }

    /// Predict, then observe; returns the scores played and the loss.
    pub fn step(&mut self, x: &FeatureVector, y: &LabelDistribution) -> Result<(Logits, f64)> {
        let snap = self.predict(x)?;
        let loss = self.observe(&snap, y)?;
        Ok((snap.z_hat, loss))
    }

    /// The bias vector `B_t` for input `x` under the current state.
    ///
    /// Inverts `A⁻¹` (cubic in `Kd`); meant for diagnostics and tests.
    pub fn compute_bias(&self, x: &FeatureVector) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let a = self.state.dense_a()?;
        Ok(bias_vector(&a, self.state.a_inv(), x, self.config.k))
    }

    /// Surrogate loss `ℓ̂_t(W)` of the round described by `snap`:
    /// `ℓ(ẑ, y) + ⟨Wx − ẑ, σ − y⟩ + c ‖Wx − ẑ‖²_{diag(σ) − σσᵀ}`.
    pub fn surrogate_loss(&self, snap: &PredictionSnapshot, y: &LabelDistribution, w: &WeightMatrix) -> Result<f64> {
        let wx = w.apply(&snap.x)?;
        if wx.len() != snap.z_hat.len() || y.len() != snap.z_hat.len() {
            return Err(Error::input("class count mismatch in surrogate loss"));
        }
        let delta = &*wx - &*snap.z_hat;
        let linear = delta.dot(&(&*snap.sigma - &**y));
        let quad = delta.dot(&(softmax_covariance(&snap.sigma) * &delta));
        Ok(log_loss(&snap.z_hat, y)? + linear + self.config.curvature_scale() * quad)
    }

    /// `φ_t(W)` and its gradient `(σ(Wx) − 1_K/K) ⊗ x + B_t`.
    pub fn regularizer_value_and_grad(&self, x: &FeatureVector, w: &WeightMatrix) -> Result<(f64, DVector<f64>)> {
        if w.classes() != self.config.k || w.dim() != self.config.d {
            return Err(Error::input("weight matrix shape does not match the configuration"));
        }
        let bias = self.compute_bias(x)?;
        let z = w.apply(x)?;
        let k = self.config.k as f64;
        let uniform_loss = log_sum_exp(z.as_slice()) - z.sum() / k;
        let value = uniform_loss + w.vectorize().dot(&bias);
        let centered = softmax(&z).map(|p| p - 1.0 / k);
        Ok((value, kron(&centered, x) + bias))
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.config.d {
            return Err(Error::input(format!("feature has dimension {}, expected {}", x.len(), self.config.d)));
        }
        Ok(())
    }
}

/// `B = (1/K) 1_K ⊗ x − ½ A diag⊗(A⁻¹)(1_K ⊗ x)`.
fn bias_vector(a: &DMatrix<f64>, a_inv: &DMatrix<f64>, x: &DVector<f64>, k: usize) -> DVector<f64> {
    let d = x.len();
    let mut diag_part = DVector::zeros(k * d);
    for b in 0..k {
        diag_part.rows_mut(b * d, d).gemv(1.0, &a_inv.view((b * d, b * d), (d, d)), x, 0.0);
    }
    kron(&DVector::from_element(k, 1.0 / k as f64), x) - a * diag_part * 0.5
}

/// Runs `iters` steps of `z ← z − step · (z − g̃ + Ã σ(z))` from `z = g̃`.
pub(crate) fn solve_fixed_point(a_tilde: &DMatrix<f64>, g_tilde: &DVector<f64>, step: f64, iters: usize) -> DVector<f64> {
    let k = g_tilde.len();
    let a = a_tilde.as_slice();
    let g = g_tilde.as_slice();
    let mut z = g.to_vec();
    let mut sigma = vec![0.0; k];
    for _ in 0..iters {
        softmax_into(&z, &mut sigma);
        for i in 0..k {
            // Ã is symmetric, so column i doubles as row i.
            let col = &a[i * k..(i + 1) * k];
            let a_sigma: f64 = col.iter().zip(&sigma).map(|(p, q)| p * q).sum();
            z[i] -= step * (z[i] - g[i] + a_sigma);
        }
    }
    DVector::from_vec(z)
}
