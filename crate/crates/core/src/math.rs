//! Primitives for the multinomial logistic loss.
//!
//! Parameter matrices `W` are `K × d` and are vectorized by stacking rows, so
//! block `k` (length `d`) of the vectorization is row `k`. Under this
//! convention `u ⊗ x` places `u_k · x` in block `k`, which makes the loss
//! gradient `(σ − y) ⊗ x` a direct block write.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on `Σ y_k = 1` for label distributions.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// A vector of `K ≥ 2` finite class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(DVector<f64>);

impl Logits {
    pub fn new(z: DVector<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::input(format!("logits need at least 2 classes, got {}", z.len())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("logits contain a non-finite entry"));
        }
        Ok(Logits(z))
    }

    pub fn from_slice(z: &[f64]) -> Result<Self> {
        Logits::new(DVector::from_column_slice(z))
    }

    pub fn zeros(k: usize) -> Self {
        Logits(DVector::zeros(k.max(2)))
    }

    pub(crate) fn new_unchecked(z: DVector<f64>) -> Self {
        debug_assert!(z.iter().all(|v| v.is_finite()));
        Logits(z)
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Index of the largest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(self.0.as_slice())
    }
}

impl Deref for Logits {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A probability vector over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(DVector<f64>);

impl LabelDistribution {
    pub fn new(y: DVector<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::input("label distribution needs at least 2 classes"));
        }
        if y.iter().any(|&v| !(-SIMPLEX_TOLERANCE..=1.0 + SIMPLEX_TOLERANCE).contains(&v)) {
            return Err(Error::input("label distribution entries must lie in [0, 1]"));
        }
        let total: f64 = y.sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::input(format!("label distribution sums to {total}, not 1")));
        }
        Ok(LabelDistribution(y))
    }

    pub fn from_slice(y: &[f64]) -> Result<Self> {
        LabelDistribution::new(DVector::from_column_slice(y))
    }

    /// The hard label `class` as the basis vector `e_class`.
    pub fn basis(k: usize, class: usize) -> Result<Self> {
        if k < 2 || class >= k {
            return Err(Error::input(format!("class {class} out of range for K = {k}")));
        }
        let mut y = DVector::zeros(k);
        y[class] = 1.0;
        Ok(LabelDistribution(y))
    }

    pub fn uniform(k: usize) -> Self {
        let k = k.max(2);
        LabelDistribution(DVector::from_element(k, 1.0 / k as f64))
    }

    pub(crate) fn new_unchecked(y: DVector<f64>) -> Self {
        LabelDistribution(y)
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

impl Deref for LabelDistribution {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A dense feature vector with finite entries.
///
/// The norm bound `‖x‖₂ ≤ R` belongs to a learner configuration and is checked
/// by [`LearnerConfig::check_feature`](crate::LearnerConfig::check_feature).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    pub fn new(x: DVector<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::input("feature vector is empty"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("feature vector contains a non-finite entry"));
        }
        Ok(FeatureVector(x))
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        FeatureVector::new(DVector::from_column_slice(x))
    }

    pub fn zeros(d: usize) -> Self {
        FeatureVector(DVector::zeros(d.max(1)))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A `K × d` linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() < 2 || w.ncols() == 0 {
            return Err(Error::input("weight matrix must be K × d with K ≥ 2, d ≥ 1"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("weight matrix contains a non-finite entry"));
        }
        Ok(WeightMatrix(w))
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        WeightMatrix(DMatrix::zeros(k, d))
    }

    /// Rebuilds `W` from its row-stacked vectorization.
    pub fn from_vectorized(k: usize, d: usize, v: &DVector<f64>) -> Result<Self> {
        if v.len() != k * d {
            return Err(Error::input(format!("vectorization has length {}, expected {}", v.len(), k * d)));
        }
        WeightMatrix::new(DMatrix::from_row_slice(k, d, v.as_slice()))
    }

    pub fn classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Row-stacked vectorization `W⃗` of length `Kd`.
    pub fn vectorize(&self) -> DVector<f64> {
        let (k, d) = self.0.shape();
        DVector::from_iterator(k * d, (0..k).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.0[(i, j)]))
    }

    /// `‖W‖₂,∞`, the largest row ℓ₂ norm.
    pub fn norm_2_inf(&self) -> f64 {
        self.0.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    /// The scores `Wx`.
    pub fn apply(&self, x: &FeatureVector) -> Result<Logits> {
        if x.len() != self.dim() {
            return Err(Error::input(format!("feature dimension {} does not match d = {}", x.len(), self.dim())));
        }
        Logits::new(&self.0 * &**x)
    }

    /// Scales every row whose norm exceeds `radius` back onto the sphere.
    pub fn clip_rows(&mut self, radius: f64) {
        for mut row in self.0.row_iter_mut() {
            let n = row.norm();
            if n > radius {
                row *= radius / n;
            }
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `ln Σ exp(z_k)`, shifted by the maximum.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let (m, rest) = shifted_tail(z);
    m + rest.ln_1p()
}

/// Returns the maximum `m` and `Σ_{k ≠ argmax} exp(z_k − m)`, so that
/// `ln Σ exp z = m + ln(1 + rest)` without cancellation near the maximum.
fn shifted_tail(z: &[f64]) -> (f64, f64) {
    let top = argmax(z);
    let m = z[top];
    let rest = z.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, &v)| (v - m).exp()).sum();
    (m, rest)
}

/// Softmax `σ(z)`, computed after shifting by the maximum.
pub fn softmax(z: &Logits) -> LabelDistribution {
    LabelDistribution::new_unchecked(softmax_slice(z.as_slice()))
}

pub(crate) fn softmax_slice(z: &[f64]) -> DVector<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = DVector::from_iterator(z.len(), z.iter().map(|&v| (v - m).exp()));
    let total: f64 = out.sum();
    out /= total;
    out
}

/// In-place softmax on a scratch buffer.
pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Multiclass logistic loss `ℓ(z, y) = −Σ_k y_k ln σ(z)_k`.
///
/// Each `−ln σ(z)_k` is evaluated as `(m − z_k) + ln(1 + rest)` so the loss
/// of a confident correct prediction does not cancel to noise.
pub fn log_loss(z: &Logits, y: &LabelDistribution) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::input(format!("logits have {} classes, label has {}", z.len(), y.len())));
    }
    let (m, rest) = shifted_tail(z.as_slice());
    let log_norm = rest.ln_1p();
    let loss = z
        .iter()
        .zip(y.iter())
        .filter(|&(_, &yk)| yk != 0.0)
        .map(|(&zk, &yk)| yk * ((m - zk) + log_norm))
        .sum::<f64>();
    Ok(loss.max(0.0))
}

/// Loss of the hard label `class`.
pub fn class_loss(z: &Logits, class: usize) -> f64 {
    let (m, rest) = shifted_tail(z.as_slice());
    (m - z[class]) + rest.ln_1p()
}

/// Kronecker product of two column vectors.
pub fn kron(u: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    DVector::from_fn(u.len() * d, |i, _| u[i / d] * x[i % d])
}

/// Loss gradient `(σ − y) ⊗ x` with respect to the vectorized weights.
pub fn grad_loss(sigma: &LabelDistribution, y: &LabelDistribution, x: &FeatureVector) -> Result<DVector<f64>> {
    if sigma.len() != y.len() {
        return Err(Error::input(format!("σ has {} classes, y has {}", sigma.len(), y.len())));
    }
    Ok(kron(&(&**sigma - &**y), x))
}

/// `diag(σ) − σσᵀ`, the Hessian of `z ↦ ℓ(z, y)`.
pub fn softmax_covariance(sigma: &DVector<f64>) -> DMatrix<f64> {
    let mut m = -(sigma * sigma.transpose());
    for (k, &p) in sigma.iter().enumerate() {
        m[(k, k)] += p;
    }
    m
}

/// The loss Hessian `(diag(σ) − σσᵀ) ⊗ xxᵀ`, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct KronHessian {
    pub factor: DMatrix<f64>,
    pub x: DVector<f64>,
}

impl KronHessian {
    /// `Hv`, computed block-wise: block `i` is `Σ_j F_ij (xᵀ v_j) x`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.x.len();
        let k = self.factor.nrows();
        let proj = DVector::from_fn(k, |j, _| self.x.dot(&v.rows(j * d, d)));
        kron(&(&self.factor * proj), &self.x)
    }

    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.apply(v))
    }

    /// Dense `Kd × Kd` matrix; intended for tests and diagnostics.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.factor.kronecker(&(&self.x * self.x.transpose()))
    }
}

pub fn hessian_loss(sigma: &LabelDistribution, x: &FeatureVector) -> KronHessian {
    KronHessian { factor: softmax_covariance(sigma), x: (**x).clone() }
}

/// Zeroes every off-diagonal `d × d` block of a `Kd × Kd` matrix.
pub fn diag_otimes(m: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if d == 0 || n != m.ncols() || !n.is_multiple_of(d) {
        return Err(Error::input(format!("{}×{} matrix is not square with block size {d}", m.nrows(), m.ncols())));
    }
    let mut out = DMatrix::zeros(n, n);
    for b in 0..n / d {
        out.view_mut((b * d, b * d), (d, d)).copy_from(&m.view((b * d, b * d), (d, d)));
    }
    Ok(out)
}
