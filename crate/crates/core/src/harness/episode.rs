use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{default_gamma, BanditLearner};
use crate::boosting::{Booster, WeakLearnerSim};
use crate::config::{regret_bound, LearnerConfig};
use crate::error::{Error, Result};
use crate::learner::Folklore;
use crate::math::{class_loss, softmax, FeatureVector, LabelDistribution, Logits, WeightMatrix};
use crate::ogd::OgdState;

use super::stream::{generate_stream, Example, Stream, StreamSpec};

/// One round of a regret trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub t: usize,
    pub loss: f64,
    pub cum_loss: f64,
    pub comparator_loss: f64,
    pub comparator_cum: f64,
    pub regret: f64,
}

/// Accumulates per-round losses into [`StreamRecord`]s.
#[derive(Debug, Default)]
pub struct RegretTrace {
    records: Vec<StreamRecord>,
    cum_loss: f64,
    comparator_cum: f64,
}

impl RegretTrace {
    pub fn push(&mut self, loss: f64, comparator_loss: f64) {
        self.cum_loss += loss;
        self.comparator_cum += comparator_loss;
        self.records.push(StreamRecord {
            t: self.records.len() + 1,
            loss,
            cum_loss: self.cum_loss,
            comparator_loss,
            comparator_cum: self.comparator_cum,
            regret: self.cum_loss - self.comparator_cum,
        });
    }

    pub fn into_records(self) -> Vec<StreamRecord> {
        self.records
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Folklore,
    Ogd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparator {
    /// The predictor that generated the stream.
    Generator,
    /// Projected gradient descent on the empirical loss of the whole stream.
    BatchFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    pub eps: f64,
    pub comparator: Comparator,
    pub ogd_step_scale: f64,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions { eps: 1e-12, comparator: Comparator::Generator, ogd_step_scale: 1.0 }
    }
}

/// Full-information learner interface used by the harness.
pub trait OnlineRegressor {
    /// Predicts for `x`, then learns from `y`; returns the scores and the loss.
    fn step(&mut self, x: &FeatureVector, y: &LabelDistribution) -> Result<(Logits, f64)>;
}

impl OnlineRegressor for Folklore {
    fn step(&mut self, x: &FeatureVector, y: &LabelDistribution) -> Result<(Logits, f64)> {
        Folklore::step(self, x, y)
    }
}

impl OnlineRegressor for OgdState {
    fn step(&mut self, x: &FeatureVector, y: &LabelDistribution) -> Result<(Logits, f64)> {
        OgdState::step(self, x, y)
    }
}

pub fn learner_config(spec: &StreamSpec, eps: f64) -> LearnerConfig {
    LearnerConfig::new(spec.d, spec.k, spec.b, spec.r).with_eps(eps)
}

pub fn build_learner(algo: Algo, spec: &StreamSpec, options: &EpisodeOptions) -> Result<Box<dyn OnlineRegressor>> {
    Ok(match algo {
        Algo::Folklore => Box::new(Folklore::new(learner_config(spec, options.eps))?),
        Algo::Ogd => Box::new(OgdState::new(spec.d, spec.k, spec.b, spec.r)?.with_step_scale(options.ogd_step_scale)),
    })
}

/// Replays `examples` through `learner`, scoring each round against `comparator`.
pub fn replay(
    learner: &mut dyn OnlineRegressor,
    examples: &[Example],
    comparator: &WeightMatrix,
) -> Result<Vec<StreamRecord>> {
    let k = comparator.classes();
    let mut trace = RegretTrace::default();
    for (i, ex) in examples.iter().enumerate() {
        let at = |e: Error| Error::AtRound { round: i + 1, source: Box::new(e) };
        let (_, loss) = learner.step(&ex.x, &ex.label(k)).map_err(at)?;
        let reference = class_loss(&comparator.apply(&ex.x).map_err(at)?, ex.y);
        trace.push(loss, reference);
    }
    Ok(trace.into_records())
}

pub fn comparator_for(stream: &Stream, spec: &StreamSpec, kind: Comparator) -> WeightMatrix {
    match kind {
        Comparator::Generator => stream.w_star.clone(),
        Comparator::BatchFit => batch_fit(&stream.examples, spec.k, spec.d, spec.b, spec.r, 500),
    }
}

/// Generates the stream for `spec` and runs `algo` over it.
pub fn run_episode(algo: Algo, spec: &StreamSpec, options: &EpisodeOptions) -> Result<Vec<StreamRecord>> {
    let stream = generate_stream(spec, &mut spec.rng())?;
    let comparator = comparator_for(&stream, spec, options.comparator);
    let mut learner = build_learner(algo, spec, options)?;
    replay(learner.as_mut(), &stream.examples, &comparator)
}

/// Projected gradient descent on the mean loss over `examples`, rows
/// constrained to the radius-`b` ball, step `1/R²`.
pub fn batch_fit(examples: &[Example], k: usize, d: usize, b: f64, r: f64, iterations: usize) -> WeightMatrix {
    let mut w = WeightMatrix::zeros(k, d);
    if examples.is_empty() {
        return w;
    }
    let step = 1.0 / (r * r);
    let n = examples.len() as f64;
    for _ in 0..iterations {
        let mut grad = DMatrix::zeros(k, d);
        for ex in examples {
            let mut residual = softmax(&w.apply(&ex.x).expect("shapes agree")).into_inner();
            residual[ex.y] -= 1.0;
            grad.ger(1.0 / n, &residual, &*ex.x, 1.0);
        }
        *w.as_matrix_mut() -= grad * step;
        w.clip_rows(b);
    }
    w
}

/// Outcome of a bandit run. `records` use the 0-1 mistake as the loss and
/// the comparator's log-loss as the reference.
#[derive(Debug, Clone)]
pub struct BanditRun {
    pub gamma: f64,
    pub records: Vec<StreamRecord>,
    pub mistakes: u64,
    pub explore_correct: u64,
    pub inner_updates: u64,
}

impl BanditRun {
    pub fn comparator_loss(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.comparator_cum)
    }

    /// Mistakes over the 1-based rounds `from..=to`.
    pub fn mistakes_between(&self, from: usize, to: usize) -> f64 {
        self.records.iter().filter(|r| r.t >= from && r.t <= to).map(|r| r.loss).sum()
    }
}

/// Runs the bandit reduction on the stream for `spec`. The exploration
/// draws use generator stream 1 of the same seed.
pub fn run_bandit_episode(spec: &StreamSpec, gamma: Option<f64>, eps: f64) -> Result<BanditRun> {
    let stream = generate_stream(spec, &mut spec.rng())?;
    let gamma = match gamma {
        Some(g) => g,
        None => default_gamma(spec.k, spec.t.max(1) as f64, |t| regret_bound(spec.d, spec.k, spec.b, spec.r, t))?,
    };
    let mut bandit = BanditLearner::new(Folklore::new(learner_config(spec, eps))?, gamma)?;
    let mut rng = spec.rng();
    rng.set_stream(1);

    let mut trace = RegretTrace::default();
    let (mut mistakes, mut explore_correct) = (0, 0);
    for (i, ex) in stream.examples.iter().enumerate() {
        let at = |e: Error| Error::AtRound { round: i + 1, source: Box::new(e) };
        let guess = bandit.round(&ex.x, &mut rng).map_err(at)?;
        let correct = guess == ex.y;
        if correct && bandit.pending_branch() == Some(crate::bandit::Branch::Explore) {
            explore_correct += 1;
        }
        bandit.feedback(correct).map_err(at)?;
        mistakes += u64::from(!correct);
        trace.push(f64::from(u8::from(!correct)), class_loss(&stream.w_star.apply(&ex.x)?, ex.y));
    }
    Ok(BanditRun {
        gamma,
        records: trace.into_records(),
        mistakes,
        explore_correct,
        inner_updates: bandit.inner().state().rounds(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingSpec {
    pub k: usize,
    pub n_learners: usize,
    pub edge: f64,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BoostingRun {
    pub records: Vec<StreamRecord>,
    pub mistakes: u64,
    pub expert_mistakes: Vec<u64>,
}

impl BoostingRun {
    pub fn error_rate(&self) -> f64 {
        self.mistakes as f64 / self.records.len().max(1) as f64
    }
}

/// Boosts simulated weak learners of the given edge on uniformly random
/// labels. Records carry the 0-1 mistake as the loss and a zero reference.
pub fn run_boosting_episode(spec: &BoostingSpec) -> Result<BoostingRun> {
    if spec.horizon < 2 {
        return Err(Error::config("boosting horizon must be at least 2"));
    }
    let learners = (0..spec.n_learners).map(|_| WeakLearnerSim::new(spec.k, spec.edge)).collect::<Result<Vec<_>>>()?;
    let mut booster = Booster::new(spec.k, spec.horizon as u64, learners)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = FeatureVector::zeros(1);
    let mut trace = RegretTrace::default();
    let mut mistakes = 0;
    for round in 0..spec.horizon {
        let at = |e: Error| Error::AtRound { round: round + 1, source: Box::new(e) };
        let y = rng.random_range(0..spec.k);
        let guess = booster.round(&x, Some(y), &mut rng).map_err(at)?;
        booster.feedback(y).map_err(at)?;
        mistakes += u64::from(guess != y);
        trace.push(f64::from(u8::from(guess != y)), 0.0);
    }
    Ok(BoostingRun { records: trace.into_records(), mistakes, expert_mistakes: booster.expert_mistakes() })
}

/// A learner frozen at a stopping time; answers queries without learning.
#[derive(Debug, Clone)]
pub struct FrozenPredictor {
    learner: Folklore,
    tau: usize,
}

impl FrozenPredictor {
    /// The 1-based round whose state was frozen.
    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Logits> {
        Ok(self.learner.predict(x)?.z_hat)
    }
}

/// Draws `τ` uniformly from `1..=T` and returns the learner as it stands
/// when round `τ` is predicted, i.e. after the first `τ − 1` examples.
pub fn online_to_batch<R: Rng + ?Sized>(
    config: LearnerConfig,
    sample: &[Example],
    rng: &mut R,
) -> Result<FrozenPredictor> {
    if sample.is_empty() {
        return Err(Error::input("online-to-batch conversion needs a non-empty sample"));
    }
    let tau = rng.random_range(1..=sample.len());
    let k = config.k;
    let mut learner = Folklore::new(config)?;
    for (i, ex) in sample[..tau - 1].iter().enumerate() {
        learner.step(&ex.x, &ex.label(k)).map_err(|e| Error::AtRound { round: i + 1, source: Box::new(e) })?;
    }
    Ok(FrozenPredictor { learner, tau })
}
