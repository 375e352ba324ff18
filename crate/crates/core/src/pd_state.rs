//! The inverse curvature matrix `A⁻¹` and the running linear terms.
//!
//! `A = λI + c · Σ_s H_s` with `H_s = (diag(σ_s) − σ_sσ_sᵀ) ⊗ x_s x_sᵀ` and
//! `c = 1/(BR + ln(K)/2)`. Each round adds a term of rank at most `K − 1` (the
//! factor always has `1_K` in its kernel), so `A⁻¹` is maintained with a
//! truncated Woodbury update rather than inverted.
//!
//! Summing the quadratic surrogates `ℓ̂_s(W)` expands each curvature term
//! `c ‖W⃗ − W⃗_s‖²_{H_s}` about the parameters played in round `s`, so the
//! linear coefficient of the cumulative objective is `G − 2S` with
//! `G = Σ_s ∇ℓ_s` and `S = c Σ_s H_s W⃗_s`. Since `H_s W⃗_s = (cov_s ẑ_s) ⊗ x_s`,
//! `S` only needs the scores that were played.

use nalgebra::{DMatrix, DVector};

use crate::config::LearnerConfig;
use crate::error::{Error, Result};
use crate::math::{kron, softmax_covariance, FeatureVector, LabelDistribution, Logits};

/// Eigenvalues of the `K × K` curvature factor at or below this are dropped.
pub const RANK_TOLERANCE: f64 = 1e-12;

const CHECKPOINT_MAGIC: [u8; 4] = *b"FKPD";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct PdState {
    d: usize,
    k: usize,
    lambda: f64,
    c_scale: f64,
    fingerprint: u64,
    a_inv: DMatrix<f64>,
    g: DVector<f64>,
    anchor: DVector<f64>,
    t: u64,
    refresh: Option<DenseRefresh>,
}

/// Dense copy of `A` kept only when periodic re-inversion is enabled.
#[derive(Debug, Clone)]
struct DenseRefresh {
    every: u64,
    since: u64,
    a: DMatrix<f64>,
}

impl PdState {
    pub fn init(config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        let n = config.dim();
        let refresh = config.reinvert_every.map(|every| DenseRefresh {
            every,
            since: 0,
            a: DMatrix::identity(n, n) * config.lambda,
        });
        Ok(PdState {
            d: config.d,
            k: config.k,
            lambda: config.lambda,
            c_scale: config.curvature_scale(),
            fingerprint: config.fingerprint(),
            a_inv: DMatrix::identity(n, n) / config.lambda,
            g: DVector::zeros(n),
            anchor: DVector::zeros(n),
            t: 0,
            refresh,
        })
    }

    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn gradient_sum(&self) -> &DVector<f64> {
        &self.g
    }

    /// `S = c Σ_s H_s W⃗_s`.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    /// `G − 2S`, the linear coefficient of the cumulative surrogate objective.
    pub fn linear_term(&self) -> DVector<f64> {
        &self.g - &self.anchor * 2.0
    }

    /// Number of completed rounds.
    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn curvature_scale(&self) -> f64 {
        self.c_scale
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d, self.k)
    }

    fn check_feature_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::input(format!("feature has dimension {}, expected {}", x.len(), self.d)));
        }
        Ok(())
    }

    /// `Y = A⁻¹ (I_K ⊗ x)`, the `Kd × K` matrix whose column `j` is `A⁻¹ (e_j ⊗ x)`.
    fn project(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d;
        let mut y = DMatrix::zeros(self.k * d, self.k);
        for j in 0..self.k {
            y.column_mut(j).gemv(1.0, &self.a_inv.columns(j * d, d), x, 0.0);
        }
        y
    }

    /// `(I_K ⊗ x)ᵀ M` for a `Kd × m` matrix `M`.
    fn contract(&self, x: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d;
        let mut out = DMatrix::zeros(self.k, m.ncols());
        for i in 0..self.k {
            out.row_mut(i).copy_from(&(x.transpose() * m.rows(i * d, d)));
        }
        out
    }

    /// Folds `c · (diag(σ) − σσᵀ) ⊗ xxᵀ` into `A` and updates `A⁻¹` to match.
    ///
    /// On error the state is left untouched.
    pub fn woodbury_update(&mut self, sigma: &LabelDistribution, x: &FeatureVector) -> Result<()> {
        self.check_feature_dim(x)?;
        if sigma.len() != self.k {
            return Err(Error::input(format!("σ has {} classes, expected {}", sigma.len(), self.k)));
        }
        let factor = softmax_covariance(sigma) * self.c_scale;
        let eig = factor.symmetric_eigen();
        let kept: Vec<usize> = (0..self.k).filter(|&j| eig.eigenvalues[j] > RANK_TOLERANCE).collect();
        if kept.is_empty() || x.iter().all(|&v| v == 0.0) {
            return self.bump_refresh_counter();
        }
        // Low-rank root of the factor: F ≈ V Vᵀ with V = [√λ_j v_j].
        let roots = DMatrix::from_fn(self.k, kept.len(), |i, c| {
            let j = kept[c];
            eig.eigenvalues[j].sqrt() * eig.eigenvectors[(i, j)]
        });
        // Ũ = (I ⊗ x) V, P = A⁻¹ Ũ, S = I + Ũᵀ A⁻¹ Ũ.
        let projected = self.project(x);
        let p = &projected * &roots;
        let inner = &roots.transpose() * self.contract(x, &p);
        let mut s = DMatrix::identity(kept.len(), kept.len()) + inner;
        s = (&s + s.transpose()) * 0.5;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::numerical("Woodbury capacitance matrix is not positive definite"))?;
        // A⁻¹ ← A⁻¹ − P S⁻¹ Pᵀ = A⁻¹ − Q Qᵀ with Q = P L⁻ᵀ.
        let q = chol
            .l()
            .solve_lower_triangular(&p.transpose())
            .ok_or_else(|| Error::numerical("triangular solve failed in Woodbury update"))?
            .transpose();
        let mut next = self.a_inv.clone();
        next.gemm(-1.0, &q, &q.transpose(), 1.0);
        symmetrize(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite entry after Woodbury update"));
        }

        let mut refresh = self.refresh.clone();
        if let Some(r) = refresh.as_mut() {
            let u = DMatrix::from_fn(self.k * self.d, kept.len(), |i, c| roots[(i / self.d, c)] * x[i % self.d]);
            r.a.gemm(1.0, &u, &u.transpose(), 1.0);
            r.since += 1;
            if r.since >= r.every {
                next = invert_spd(&r.a)?;
                r.since = 0;
            }
        }
        self.a_inv = next;
        self.refresh = refresh;
        Ok(())
    }

    fn bump_refresh_counter(&mut self) -> Result<()> {
        if let Some(r) = self.refresh.as_mut() {
            r.since += 1;
            if r.since >= r.every {
                self.a_inv = invert_spd(&r.a)?;
                r.since = 0;
            }
        }
        Ok(())
    }

    /// `S ← S + c (diag(σ) − σσᵀ) z ⊗ x` for a round played with scores `z`.
    pub fn accumulate_anchor(&mut self, sigma: &LabelDistribution, x: &FeatureVector, z: &Logits) -> Result<()> {
        self.check_feature_dim(x)?;
        if sigma.len() != self.k || z.len() != self.k {
            return Err(Error::input(format!("anchor update needs {} classes", self.k)));
        }
        let weighted = softmax_covariance(sigma) * &**z * self.c_scale;
        self.anchor += kron(&weighted, x);
        Ok(())
    }

    /// `G ← G + g` and advances the round counter.
    pub fn accumulate_gradient(&mut self, g: &DVector<f64>) -> Result<()> {
        if g.len() != self.g.len() {
            return Err(Error::input(format!("gradient has length {}, expected {}", g.len(), self.g.len())));
        }
        self.g += g;
        self.t += 1;
        Ok(())
    }

    /// `Ã` with `Ã_ij = ½ xᵀ [[A⁻¹]]_ij x`.
    pub fn block_quadratic(&self, x: &FeatureVector) -> Result<DMatrix<f64>> {
        self.check_feature_dim(x)?;
        Ok(self.reduce(x).0)
    }

    /// `g̃` with `g̃_k = −½ ⟨x, (A⁻¹L)_k⟩ + ¼ xᵀ [[A⁻¹]]_kk x`, `L` the [linear term](Self::linear_term).
    pub fn gtilde(&self, x: &FeatureVector) -> Result<DVector<f64>> {
        self.check_feature_dim(x)?;
        Ok(self.reduce(x).1)
    }

    /// Both `Ã` and `g̃` from a single pass over `A⁻¹`.
    pub(crate) fn reduce(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let projected = self.project(x);
        let mut a_tilde = self.contract(x, &projected) * 0.5;
        symmetrize(&mut a_tilde);
        // ⟨x, (A⁻¹L)_k⟩ = (e_k ⊗ x)ᵀ A⁻¹ L = (Yᵀ L)_k since A⁻¹ is symmetric.
        let mut g_tilde = projected.tr_mul(&self.linear_term()) * -0.5;
        for k in 0..self.k {
            g_tilde[k] += 0.5 * a_tilde[(k, k)];
        }
        (a_tilde, g_tilde)
    }

    /// `A`, recovered by inverting `A⁻¹`. Costs `O((Kd)³)`.
    pub fn dense_a(&self) -> Result<DMatrix<f64>> {
        match &self.refresh {
            Some(r) => Ok(r.a.clone()),
            None => invert_spd(&self.a_inv),
        }
    }

    /// Serializes `A⁻¹`, `G`, `S`, the round counter and the configuration
    /// fingerprint as a little-endian blob with a `FKPD` + version header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.k * self.d;
        let mut out = Vec::with_capacity(40 + 8 * (n * n + 2 * n));
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [self.d as u64, self.k as u64, self.t, self.fingerprint] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        // Column-major; A⁻¹ is symmetric so the order only matters for bit-exactness.
        for v in self.a_inv.iter().chain(self.g.iter()).chain(self.anchor.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], config: &LearnerConfig) -> Result<Self> {
        let mut state = PdState::init(config)?;
        let mut reader = ByteReader { bytes, pos: 0 };
        if reader.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::input("checkpoint magic mismatch"));
        }
        let version = u32::from_le_bytes(reader.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::input(format!("unsupported checkpoint version {version}")));
        }
        let (d, k, t, fingerprint) = (reader.u64()?, reader.u64()?, reader.u64()?, reader.u64()?);
        if d != config.d as u64 || k != config.k as u64 || fingerprint != config.fingerprint() {
            return Err(Error::config("checkpoint was written under a different configuration"));
        }
        let n = config.dim();
        for v in state.a_inv.iter_mut() {
            *v = reader.f64()?;
        }
        for v in state.g.iter_mut().chain(state.anchor.iter_mut()) {
            *v = reader.f64()?;
        }
        if reader.pos != bytes.len() {
            return Err(Error::input("trailing bytes after checkpoint payload"));
        }
        debug_assert_eq!(state.a_inv.nrows(), n);
        state.t = t;
        if let Some(r) = state.refresh.as_mut() {
            r.a = invert_spd(&state.a_inv)?;
        }
        Ok(state)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let out = self.bytes.get(self.pos..end).ok_or_else(|| Error::input("checkpoint is truncated"))?;
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))?
        .inverse();
    symmetrize(&mut inv);
    Ok(inv)
}
