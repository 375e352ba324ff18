//! Online multiclass boosting.
//!
//! [`Booster`] runs a chain of `N` weak learners. Expert `i` aggregates the
//! scores of expert `i − 1` with the class proposed by weak learner `i`,
//! through its own [`BoostingRegression`] instance, and a multiplicative
//! weights layer picks which expert's argmax to output.
//!
//! [`BoostingRegression`] solves the one-parameter problem "how far should
//! the scores move along `e_l`" by collapsing it to binary logistic
//! regression over the clipped feature `(½(s_l − lse_{k≠l} s_k), 1)`, handled
//! by a two-class, two-feature [`Folklore`] learner.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::LearnerConfig;
use crate::error::{Error, Result};
use crate::learner::{Folklore, PredictionSnapshot};
use crate::math::{log_sum_exp, softmax, FeatureVector, LabelDistribution, Logits};

/// A cost matrix indexed as `C[(true class, predicted class)]`.
///
/// Members have a zero diagonal, non-negative entries and rows of ℓ₁ norm at
/// most one.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DMatrix<f64>);

impl CostMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Cost of predicting `predicted` when the truth is `truth`.
    pub fn cost(&self, truth: usize, predicted: usize) -> f64 {
        self.0[(truth, predicted)]
    }

    pub fn classes(&self) -> usize {
        self.0.nrows()
    }
}

/// Shifted and rescaled loss gradient at `s`:
/// `C[(y, l)] = (Ĉ(y, l) − Ĉ(y, y)) / K` with `Ĉ(y, l) = σ(s)_l − 1{l = y}`.
pub fn cost_matrix(s: &Logits) -> CostMatrix {
    let k = s.len();
    let sigma = softmax(s);
    let raw = |y: usize, l: usize| sigma[l] - if l == y { 1.0 } else { 0.0 };
    CostMatrix(DMatrix::from_fn(k, k, |y, l| (raw(y, l) - raw(y, y)) / k as f64))
}

/// `(s_l, ln Σ_{k≠l} exp s_k)`.
pub fn collapse(s: &Logits, l: usize) -> [f64; 2] {
    let rest: Vec<f64> = s.iter().enumerate().filter(|&(i, _)| i != l).map(|(_, &v)| v).collect();
    [s[l], log_sum_exp(&rest)]
}

/// `(clip(½(s̃₁ − s̃₂), −ln T, ln T), 1)`.
pub fn clip_feature(collapsed: [f64; 2], horizon: u64) -> FeatureVector {
    let bound = (horizon as f64).ln();
    let half_gap = 0.5 * (collapsed[0] - collapsed[1]);
    FeatureVector::new(DVector::from_column_slice(&[half_gap.clamp(-bound, bound), 1.0]))
        .expect("clipped feature is finite")
}

/// Lifts binary scores `ζ` back to `K` classes: `ŝ_l = ζ₁` and the other
/// classes keep their relative odds with total log-mass `ζ₂`.
pub fn expand(s: &Logits, l: usize, zeta: &Logits) -> Logits {
    let [_, rest] = collapse(s, l);
    let shift = zeta[1] - rest;
    let out = DVector::from_fn(s.len(), |k, _| if k == l { zeta[0] } else { s[k] + shift });
    Logits::new_unchecked(out)
}

/// Learner configuration for the binary subproblem: `K = 2`, `d = 2`,
/// `R = 1 + ln T`, `B = 2`.
pub fn regression_config(horizon: u64) -> LearnerConfig {
    LearnerConfig::new(2, 2, 2.0, 1.0 + (horizon as f64).ln())
}

#[derive(Debug, Clone)]
pub struct BoostingRegression {
    inner: Folklore,
    horizon: u64,
    pending: Option<(PredictionSnapshot, usize)>,
}

impl BoostingRegression {
    pub fn new(horizon: u64) -> Result<Self> {
        Self::with_config(horizon, regression_config(horizon))
    }

    pub fn with_config(horizon: u64, config: LearnerConfig) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::config("boosting regression needs a horizon of at least 2"));
        }
        if config.k != 2 || config.d != 2 {
            return Err(Error::config("boosting regression runs a K = 2, d = 2 learner"));
        }
        Ok(BoostingRegression { inner: Folklore::new(config)?, horizon, pending: None })
    }

    pub fn inner(&self) -> &Folklore {
        &self.inner
    }

    /// Adjusted scores `ŝ` for base scores `s` and proposed class `l`.
    pub fn round(&mut self, s: &Logits, l: usize) -> Result<Logits> {
        if self.pending.is_some() {
            return Err(Error::protocol("previous boosting-regression round has not received feedback"));
        }
        if l >= s.len() {
            return Err(Error::input(format!("class {l} out of range for K = {}", s.len())));
        }
        let x = clip_feature(collapse(s, l), self.horizon);
        let snap = self.inner.predict(&x)?;
        let out = expand(s, l, &snap.z_hat);
        self.pending = Some((snap, l));
        Ok(out)
    }

    /// Binary label: class 0 if the proposed class was right, class 1 otherwise.
    pub fn feedback(&mut self, y: usize) -> Result<()> {
        let (snap, l) =
            self.pending.take().ok_or_else(|| Error::protocol("feedback without a pending boosting-regression round"))?;
        let binary = LabelDistribution::basis(2, usize::from(y != l))?;
        self.inner.observe(&snap, &binary)?;
        Ok(())
    }
}

/// What a weak learner sees when asked for a prediction.
pub struct WeakContext<'a> {
    pub x: &'a FeatureVector,
    pub cost: &'a CostMatrix,
    /// The true class, exposed only by simulations.
    pub label_hint: Option<usize>,
}

pub trait WeakLearner {
    fn predict(&mut self, ctx: &WeakContext<'_>, rng: &mut dyn rand::RngCore) -> Result<usize>;

    fn update(&mut self, _x: &FeatureVector, _cost: &CostMatrix, _y: usize) -> Result<()> {
        Ok(())
    }
}

/// Weak learner that peeks at the label: it answers from the distribution
/// that picks the truth with probability `edge` and is uniform otherwise.
#[derive(Debug, Clone)]
pub struct WeakLearnerSim {
    k: usize,
    edge: f64,
}

impl WeakLearnerSim {
    pub fn new(k: usize, edge: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::config("weak learner needs K ≥ 2"));
        }
        if !(0.0..=1.0).contains(&edge) {
            return Err(Error::config(format!("edge must lie in [0, 1], got {edge}")));
        }
        Ok(WeakLearnerSim { k, edge })
    }

    /// Returns `truth` with probability `edge + (1 − edge)/K`.
    pub fn sample<R: Rng + ?Sized>(&self, truth: usize, rng: &mut R) -> usize {
        if rng.random_bool(self.edge) {
            truth
        } else {
            rng.random_range(0..self.k)
        }
    }
}

impl WeakLearner for WeakLearnerSim {
    fn predict(&mut self, ctx: &WeakContext<'_>, rng: &mut dyn rand::RngCore) -> Result<usize> {
        let truth = ctx.label_hint.ok_or_else(|| Error::protocol("simulated weak learner needs the label hint"))?;
        if truth >= self.k {
            return Err(Error::input(format!("class {truth} out of range for K = {}", self.k)));
        }
        Ok(self.sample(truth, rng))
    }
}

struct Expert<W> {
    weak: W,
    regression: BoostingRegression,
    log_weight: f64,
    mistakes: u64,
}

struct ExpertRound {
    cost: CostMatrix,
    prediction: usize,
}

struct PendingBoost {
    x: FeatureVector,
    rounds: Vec<ExpertRound>,
}

pub struct Booster<W> {
    k: usize,
    experts: Vec<Expert<W>>,
    pending: Option<PendingBoost>,
}

impl<W: WeakLearner> Booster<W> {
    pub fn new(k: usize, horizon: u64, weak_learners: Vec<W>) -> Result<Self> {
        if k < 2 {
            return Err(Error::config("boosting needs K ≥ 2"));
        }
        if weak_learners.is_empty() {
            return Err(Error::config("boosting needs at least one weak learner"));
        }
        let experts = weak_learners
            .into_iter()
            .map(|weak| {
                Ok(Expert { weak, regression: BoostingRegression::new(horizon)?, log_weight: 0.0, mistakes: 0 })
            })
            .collect::<Result<_>>()?;
        Ok(Booster { k, experts, pending: None })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    /// Log-weights `ln v^i` of the experts.
    pub fn log_weights(&self) -> Vec<f64> {
        self.experts.iter().map(|e| e.log_weight).collect()
    }

    /// Mistakes made so far by each expert's argmax.
    pub fn expert_mistakes(&self) -> Vec<u64> {
        self.experts.iter().map(|e| e.mistakes).collect()
    }

    /// Expert predictions `ŷ^i` of the round awaiting feedback.
    pub fn pending_predictions(&self) -> Option<Vec<usize>> {
        self.pending.as_ref().map(|p| p.rounds.iter().map(|r| r.prediction).collect())
    }

    /// Builds `s^0 = 0, …, s^N`, then samples an expert with probability
    /// proportional to its weight and returns its argmax class.
    pub fn round<R: Rng>(&mut self, x: &FeatureVector, label_hint: Option<usize>, rng: &mut R) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::protocol("previous boosting round has not received feedback"));
        }
        let mut s = Logits::zeros(self.k);
        let mut rounds = Vec::with_capacity(self.experts.len());
        for expert in &mut self.experts {
            let cost = cost_matrix(&s);
            let ctx = WeakContext { x, cost: &cost, label_hint };
            let l = expert.weak.predict(&ctx, rng)?;
            if l >= self.k {
                return Err(Error::input(format!("weak learner proposed class {l} for K = {}", self.k)));
            }
            s = expert.regression.round(&s, l)?;
            rounds.push(ExpertRound { cost, prediction: s.argmax() });
        }
        let chosen = gumbel_argmax(self.experts.iter().map(|e| e.log_weight), rng);
        let out = rounds[chosen].prediction;
        self.pending = Some(PendingBoost { x: x.clone(), rounds });
        Ok(out)
    }

    /// Updates every weak learner and regression instance with `y`, and
    /// multiplies the weight of each expert that erred by `e⁻¹`.
    pub fn feedback(&mut self, y: usize) -> Result<()> {
        if y >= self.k {
            return Err(Error::input(format!("class {y} out of range for K = {}", self.k)));
        }
        let pending = self.pending.take().ok_or_else(|| Error::protocol("feedback without a pending boosting round"))?;
        for (expert, r) in self.experts.iter_mut().zip(&pending.rounds) {
            expert.weak.update(&pending.x, &r.cost, y)?;
            expert.regression.feedback(y)?;
            if r.prediction != y {
                expert.log_weight -= 1.0;
                expert.mistakes += 1;
            }
        }
        Ok(())
    }
}

/// Samples `i` with probability `∝ exp(w_i)` by the Gumbel-max trick.
fn gumbel_argmax<R: Rng + ?Sized>(log_weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, w) in log_weights.enumerate() {
        let u: f64 = rng.random();
        // u ∈ [0, 1); map to (0, 1] so the double log stays finite.
        let g = -(-(1.0 - u).ln()).ln();
        if w + g > best.1 {
            best = (i, w + g);
        }
    }
    best.0
}
