//! Synthetic streams, episode runners and trace export.

pub mod diagnostics;
pub mod episode;
pub mod export;
pub mod stream;

pub use diagnostics::{hessian_dominance_counterexample, HessianDominance};
pub use episode::{
    batch_fit, online_to_batch, run_bandit_episode, run_boosting_episode, run_episode, Algo, BanditRun,
    BoostingRun, BoostingSpec, Comparator, EpisodeOptions, FrozenPredictor, OnlineRegressor, StreamRecord,
};
pub use export::{export, read_csv, read_manifest, write_csv, write_manifest, Format, RunManifest};
pub use stream::{generate_stream, Example, Stream, StreamMode, StreamSpec};
