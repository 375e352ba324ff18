//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use folklore::{FeatureVector, LabelDistribution, LearnerConfig, WeightMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Uniform in the radius-`r` ball.
pub fn ball<R: Rng>(d: usize, r: f64, rng: &mut R) -> FeatureVector {
    let v = DVector::from_vec(gaussian(d, rng));
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    FeatureVector::new(&v * (radius / v.norm())).unwrap()
}

pub fn simplex<R: Rng>(k: usize, rng: &mut R) -> LabelDistribution {
    let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / s).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    LabelDistribution::from_slice(&p).unwrap()
}

pub fn random_label<R: Rng>(k: usize, rng: &mut R) -> LabelDistribution {
    if rng.random_bool(0.5) {
        LabelDistribution::basis(k, rng.random_range(0..k)).unwrap()
    } else {
        simplex(k, rng)
    }
}

pub fn random_weights<R: Rng>(k: usize, d: usize, scale: f64, rng: &mut R) -> WeightMatrix {
    WeightMatrix::new(DMatrix::from_vec(k, d, gaussian(k * d, rng)) * scale).unwrap()
}

/// A member of the comparator class: every row uniform in the radius-`b` ball.
pub fn comparator_weights<R: Rng>(k: usize, d: usize, b: f64, rng: &mut R) -> WeightMatrix {
    let mut m = DMatrix::zeros(k, d);
    for i in 0..k {
        m.row_mut(i).copy_from(&ball(d, b, rng).transpose());
    }
    WeightMatrix::new(m).unwrap()
}

// ---------- extended precision ----------

/// `exp` from double-double arithmetic alone: reduce by `k ln 2`, scale the
/// remainder by `2⁻¹⁰`, sum a Taylor series, then square back up.
pub fn tf_exp(v: TwoFloat) -> TwoFloat {
    let k = (v.hi() / std::f64::consts::LN_2).round();
    let r = (v - twofloat::consts::LN_2 * k) / 1024.0;
    let mut term = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(1.0);
    for n in 1..=20 {
        term = term * r / n as f64;
        sum += term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    sum * 2f64.powi(k as i32)
}

/// `ln` by one Newton step on `exp(y) = s` from the double estimate.
pub fn tf_ln(s: TwoFloat) -> TwoFloat {
    let y = TwoFloat::from(s.hi().ln());
    y + s / tf_exp(y) - 1.0
}

/// Softmax in double-double arithmetic after a max shift.
pub fn tf_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<TwoFloat> = z.iter().map(|&v| tf_exp(TwoFloat::from(v) - TwoFloat::from(m))).collect();
    let s = e.iter().fold(TwoFloat::from(0.0), |a, &b| a + b);
    e.iter().map(|&v| (v / s).hi()).collect()
}

/// `−Σ y_k log σ(z)_k` in double-double arithmetic.
pub fn tf_log_loss(z: &[f64], y: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = z.iter().fold(TwoFloat::from(0.0), |a, &v| a + tf_exp(TwoFloat::from(v) - TwoFloat::from(m)));
    let lse = TwoFloat::from(m) + tf_ln(s);
    let mut total = TwoFloat::from(0.0);
    for (&zk, &yk) in z.iter().zip(y) {
        total += TwoFloat::from(yk) * (lse - TwoFloat::from(zk));
    }
    total.hi()
}

// ---------- plain dense helpers ----------

pub fn softmax_plain(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn loss_plain(z: &[f64], y: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().zip(y).map(|(zk, yk)| yk * (lse - zk)).sum()
}

/// `z = W x` with `w` in row-stacked vectorized form.
pub fn scores(w: &DVector<f64>, x: &[f64], k: usize) -> Vec<f64> {
    let d = x.len();
    (0..k).map(|i| (0..d).map(|a| w[i * d + a] * x[a]).sum()).collect()
}

/// Dense `(diag σ − σσᵀ) ⊗ xxᵀ`, entry by entry.
pub fn dense_hessian(sigma: &[f64], x: &[f64]) -> DMatrix<f64> {
    let (k, d) = (sigma.len(), x.len());
    DMatrix::from_fn(k * d, k * d, |r, c| {
        let (i, a, j, b) = (r / d, r % d, c / d, c % d);
        let cov = if i == j { sigma[i] - sigma[i] * sigma[i] } else { -sigma[i] * sigma[j] };
        cov * x[a] * x[b]
    })
}

/// `(u ⊗ x)` with block `i` equal to `u_i x`.
pub fn kron_plain(u: &[f64], x: &[f64]) -> DVector<f64> {
    let d = x.len();
    DVector::from_fn(u.len() * d, |r, _| u[r / d] * x[r % d])
}

pub fn block_diag_part(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| if r / d == c / d { m[(r, c)] } else { 0.0 })
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

// ---------- full-dimensional FTRL oracle ----------

/// One played round as the surrogate sees it.
#[derive(Debug, Clone)]
pub struct Round {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub sigma: Vec<f64>,
    pub y: Vec<f64>,
}

/// Runs the learner's update rule with dense matrices. `A` is accumulated
/// directly, every inverse is computed from scratch, and the FTRL objective
/// is evaluated term by term as `λ‖W‖² + Σ ℓ̂_s(W) + φ_t(W)`.
#[derive(Debug, Clone)]
pub struct DenseFtrl {
    pub k: usize,
    pub d: usize,
    pub c: f64,
    pub lambda: f64,
    pub a: DMatrix<f64>,
    pub g: DVector<f64>,
    pub history: Vec<Round>,
}

impl DenseFtrl {
    pub fn new(config: &LearnerConfig) -> Self {
        let n = config.k * config.d;
        DenseFtrl {
            k: config.k,
            d: config.d,
            c: 1.0 / (config.b * config.r + (config.k as f64).ln() / 2.0),
            lambda: config.lambda,
            a: DMatrix::identity(n, n) * config.lambda,
            g: DVector::zeros(n),
            history: Vec::new(),
        }
    }

    pub fn a_inv(&self) -> DMatrix<f64> {
        self.a.clone().try_inverse().unwrap()
    }

    /// Folds in one round played with scores `z` (probabilities `sigma`) on `x`.
    pub fn update(&mut self, sigma: &[f64], x: &[f64], y: &[f64], z: &[f64]) {
        self.a += dense_hessian(sigma, x) * self.c;
        let diff: Vec<f64> = sigma.iter().zip(y).map(|(s, t)| s - t).collect();
        self.g += kron_plain(&diff, x);
        self.history.push(Round { x: x.to_vec(), z: z.to_vec(), sigma: sigma.to_vec(), y: y.to_vec() });
    }

    /// `B = (1/K) 1 ⊗ x − ½ A diag⊗(A⁻¹)(1 ⊗ x)`.
    pub fn bias(&self, x: &[f64]) -> DVector<f64> {
        let ones = vec![1.0; self.k];
        let lifted = kron_plain(&ones, x);
        lifted.clone() / self.k as f64 - &self.a * block_diag_part(&self.a_inv(), self.d) * lifted * 0.5
    }

    /// `b(W; A) = σ(Wx) ⊗ x − ½ A diag⊗(A⁻¹)(1 ⊗ x)`.
    pub fn b_target(&self, w: &DVector<f64>, x: &[f64]) -> DVector<f64> {
        let sigma = softmax_plain(&scores(w, x, self.k));
        let ones = vec![1.0; self.k];
        kron_plain(&sigma, x) - &self.a * block_diag_part(&self.a_inv(), self.d) * kron_plain(&ones, x) * 0.5
    }

    /// `ℓ̂_s(W)` in score space.
    pub fn surrogate(&self, round: &Round, w: &DVector<f64>) -> f64 {
        let delta: Vec<f64> = scores(w, &round.x, self.k).iter().zip(&round.z).map(|(a, b)| a - b).collect();
        let linear: f64 = delta.iter().zip(round.sigma.iter().zip(&round.y)).map(|(d, (s, y))| d * (s - y)).sum();
        let mean: f64 = delta.iter().zip(&round.sigma).map(|(d, s)| d * s).sum();
        let quad: f64 = delta.iter().zip(&round.sigma).map(|(d, s)| s * d * d).sum::<f64>() - mean * mean;
        loss_plain(&round.z, &round.y) + linear + self.c * quad
    }

    /// Gradient of `Σ_s ℓ̂_s` at `w`.
    fn surrogate_grad(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.k * self.d);
        for round in &self.history {
            let delta: Vec<f64> = scores(w, &round.x, self.k).iter().zip(&round.z).map(|(a, b)| a - b).collect();
            let mean: f64 = delta.iter().zip(&round.sigma).map(|(d, s)| d * s).sum();
            let u: Vec<f64> = (0..self.k)
                .map(|i| round.sigma[i] - round.y[i] + 2.0 * self.c * round.sigma[i] * (delta[i] - mean))
                .collect();
            out += kron_plain(&u, &round.x);
        }
        out
    }

    /// The cumulative objective's linear coefficient: the surrogate-sum gradient at `W = 0`.
    pub fn linear_term(&self) -> DVector<f64> {
        self.surrogate_grad(&DVector::zeros(self.k * self.d))
    }

    /// `λ‖W‖² + Σ ℓ̂_s(W) + (1/K) Σ_k ℓ(Wx, k) + ⟨W⃗, B⟩`.
    pub fn objective(&self, w: &DVector<f64>, x: &[f64], bias: &DVector<f64>) -> f64 {
        let z = scores(w, x, self.k);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let past: f64 = self.history.iter().map(|r| self.surrogate(r, w)).sum();
        self.lambda * w.norm_squared() + past + lse - z.iter().sum::<f64>() / self.k as f64 + w.dot(bias)
    }

    /// Minimizes the FTRL objective for `x` by damped Newton with backtracking.
    pub fn argmin(&self, x: &[f64]) -> DVector<f64> {
        let n = self.k * self.d;
        let bias = self.bias(x);
        let curvature = (&self.a - DMatrix::identity(n, n) * self.lambda) * 2.0
            + DMatrix::identity(n, n) * (2.0 * self.lambda);
        let mut w = DVector::zeros(n);
        let uniform = vec![1.0 / self.k as f64; self.k];
        for _ in 0..200 {
            let sigma = softmax_plain(&scores(&w, x, self.k));
            let centered: Vec<f64> = sigma.iter().zip(&uniform).map(|(s, u)| s - u).collect();
            let grad = &w * (2.0 * self.lambda) + self.surrogate_grad(&w) + &bias + kron_plain(&centered, x);
            let hess = &curvature + dense_hessian(&sigma, x);
            let step = hess.cholesky().unwrap().solve(&grad);
            let decrement = grad.dot(&step);
            if decrement < 1e-30 {
                break;
            }
            let f0 = self.objective(&w, x, &bias);
            let mut t = 1.0;
            loop {
                let cand = &w - &step * t;
                if self.objective(&cand, x, &bias) <= f0 - 0.25 * t * decrement || t < 1e-12 {
                    w = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        w
    }
}

/// Best total loss over shifts `s + α e_l` with `α` on the grid `−2, −1.9, …, 2`.
pub fn grid_shift_loss(rounds: &[(Vec<f64>, usize, usize)]) -> f64 {
    (0..=40)
        .map(|i| {
            let alpha = -2.0 + 0.1 * i as f64;
            rounds
                .iter()
                .map(|(s, l, y)| {
                    let mut z = s.clone();
                    z[*l] += alpha;
                    let mut onehot = vec![0.0; z.len()];
                    onehot[*y] = 1.0;
                    loss_plain(&z, &onehot)
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Central finite-difference gradient of `f` at `w`.
pub fn fd_grad(f: impl Fn(&DVector<f64>) -> f64, w: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(w.len(), |i, _| {
        let mut p = w.clone();
        let mut m = w.clone();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

/// Drives a learner and the dense oracle through the same `steps` random
/// rounds; the oracle is fed the probabilities the learner played.
pub fn paired_trajectory(config: &LearnerConfig, steps: usize, seed: u64) -> (folklore::Folklore, DenseFtrl) {
    let mut rng = rng(seed);
    let mut learner = folklore::Folklore::new(config.clone()).unwrap();
    let mut oracle = DenseFtrl::new(config);
    for _ in 0..steps {
        let x = ball(config.d, config.r, &mut rng);
        let y = random_label(config.k, &mut rng);
        let snap = learner.predict(&x).unwrap();
        learner.observe(&snap, &y).unwrap();
        oracle.update(snap.sigma.as_slice(), x.as_slice(), y.as_slice(), snap.z_hat.as_slice());
    }
    (learner, oracle)
}
