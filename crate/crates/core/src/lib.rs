//! Online multiclass logistic regression with an improper FTRL learner.
//!
//! [`Folklore`] predicts class scores for each context `x` and is updated
//! with the revealed label distribution. Its per-round cost is quadratic in
//! `d·K`, dominated by a rank-`(K−1)` Woodbury update of the inverse
//! curvature matrix and a `K`-dimensional fixed-point solve.
//!
//! ```
//! use folklore::{Folklore, FeatureVector, LabelDistribution, LearnerConfig};
//!
//! let mut learner = Folklore::new(LearnerConfig::new(2, 3, 1.0, 1.0))?;
//! let x = FeatureVector::from_slice(&[0.6, -0.3])?;
//! let snap = learner.predict(&x)?;
//! let loss = learner.observe(&snap, &LabelDistribution::basis(3, 1)?)?;
//! assert!(loss > 0.0);
//! # Ok::<(), folklore::Error>(())
//! ```
//!
//! Also included: a projected OGD baseline ([`ogd`]), reductions to bandit
//! feedback ([`bandit`]) and online boosting ([`boosting`]), and a harness
//! for synthetic streams and regret traces ([`harness`]).

pub mod bandit;
pub mod boosting;
pub mod config;
mod error;
pub mod harness;
pub mod learner;
pub mod math;
pub mod ogd;
pub mod pd_state;

pub use config::{regret_bound, LearnerConfig};
pub use error::{Error, Result};
pub use learner::{Folklore, PredictionSnapshot};
pub use math::{log_loss, softmax, FeatureVector, LabelDistribution, Logits, WeightMatrix};
pub use ogd::OgdState;
pub use pd_state::PdState;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/regularizer.md")]
    mod regularizer {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/bandit.md")]
    mod bandit {}
    #[doc = include_str!("../../../book/src/boosting.md")]
    mod boosting {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
}
