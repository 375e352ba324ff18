//! Bandit multiclass prediction by exploration split.
//!
//! With probability `γ` the round explores: the predicted class is uniform
//! and, if it turns out correct, the full-information learner is updated
//! with that label. Otherwise the class is sampled from the learner's
//! predicted distribution and nothing is learned.

use rand::Rng;

use crate::error::{Error, Result};
use crate::learner::Folklore;
use crate::math::{FeatureVector, LabelDistribution};

/// `min(1, √(K · regret(T) / T))`.
// The negated comparisons also reject NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn default_gamma(k: usize, t: f64, regret: impl Fn(f64) -> f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::config(format!("horizon must be positive, got {t}")));
    }
    let r = regret(t);
    if !(r >= 0.0) {
        return Err(Error::config(format!("regret bound must be non-negative, got {r}")));
    }
    Ok((k as f64 * r / t).sqrt().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Explore,
    Exploit,
}

#[derive(Debug, Clone)]
struct PendingRound {
    x: FeatureVector,
    predicted: usize,
    branch: Branch,
}

#[derive(Debug, Clone)]
pub struct BanditLearner {
    inner: Folklore,
    gamma: f64,
    pending: Option<PendingRound>,
}

impl BanditLearner {
    pub fn new(inner: Folklore, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("exploration probability {gamma} is outside [0, 1]")));
        }
        Ok(BanditLearner { inner, gamma, pending: None })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn inner(&self) -> &Folklore {
        &self.inner
    }

    /// Branch taken by the round awaiting feedback, if any.
    pub fn pending_branch(&self) -> Option<Branch> {
        self.pending.as_ref().map(|p| p.branch)
    }

    /// Draws the explore coin, then the class. Randomness is consumed in that
    /// order: one Bernoulli draw, then one uniform-class or categorical draw.
    pub fn round<R: Rng + ?Sized>(&mut self, x: &FeatureVector, rng: &mut R) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::protocol("previous bandit round has not received feedback"));
        }
        let k = self.inner.config().k;
        self.inner.config().check_feature(x)?;
        let explore = rng.random_bool(self.gamma);
        let (predicted, branch) = if explore {
            (rng.random_range(0..k), Branch::Explore)
        } else {
            let snap = self.inner.predict(x)?;
            (sample_class(snap.sigma.as_slice(), rng), Branch::Exploit)
        };
        self.pending = Some(PendingRound { x: x.clone(), predicted, branch });
        Ok(predicted)
    }

    /// Reports whether the last predicted class was correct. The learner is
    /// updated only after a correct exploration round.
    pub fn feedback(&mut self, correct: bool) -> Result<()> {
        let pending = self.pending.take().ok_or_else(|| Error::protocol("feedback without a pending bandit round"))?;
        if pending.branch == Branch::Explore && correct {
            let y = LabelDistribution::basis(self.inner.config().k, pending.predicted)?;
            let snap = self.inner.predict(&pending.x)?;
            self.inner.observe(&snap, &y)?;
        }
        Ok(())
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_class<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LearnerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn learner(gamma: f64) -> BanditLearner {
        BanditLearner::new(Folklore::new(LearnerConfig::new(2, 3, 1.0, 1.0)).unwrap(), gamma).unwrap()
    }

    #[test]
    fn gamma_boundaries() {
        assert_eq!(default_gamma(3, 100.0, |t| t / 3.0).unwrap(), 1.0);
        assert_eq!(default_gamma(3, 100.0, |_| 0.0).unwrap(), 0.0);
        assert_eq!(default_gamma(3, 100.0, |t| 10.0 * t).unwrap(), 1.0);
        assert!(default_gamma(3, 0.0, |_| 1.0).is_err());
        assert!(BanditLearner::new(Folklore::new(LearnerConfig::new(1, 2, 1.0, 1.0)).unwrap(), 1.5).is_err());
    }

    #[test]
    fn exploit_rounds_never_update() {
        let mut b = learner(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FeatureVector::from_slice(&[0.3, 0.2]).unwrap();
        for correct in [true, false] {
            b.round(&x, &mut rng).unwrap();
            assert_eq!(b.pending_branch(), Some(Branch::Exploit));
            b.feedback(correct).unwrap();
            assert_eq!(b.inner().state().rounds(), 0);
        }
    }

    #[test]
    fn explore_updates_only_when_correct() {
        let mut b = learner(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = FeatureVector::from_slice(&[0.3, 0.2]).unwrap();
        b.round(&x, &mut rng).unwrap();
        b.feedback(false).unwrap();
        assert_eq!(b.inner().state().rounds(), 0);
        b.round(&x, &mut rng).unwrap();
        b.feedback(true).unwrap();
        assert_eq!(b.inner().state().rounds(), 1);
    }

    #[test]
    fn protocol_pairing() {
        let mut b = learner(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(b.feedback(true), Err(Error::Protocol(_))));
        let x = FeatureVector::from_slice(&[0.1, 0.1]).unwrap();
        b.round(&x, &mut rng).unwrap();
        assert!(matches!(b.round(&x, &mut rng), Err(Error::Protocol(_))));
    }
}
