//! Measures competition between task recognition and task learning across
//! language-model checkpoints, and fuses a best-TR checkpoint with a best-TL
//! checkpoint at inference time.
//!
//! * [`corpus`] loads classification datasets and makes seeded splits.
//! * [`demo`] renders gold, random, and abstract-label prompts.
//! * [`score_log`] reads probability logs into accuracy trajectories.
//! * [`metrics`] computes competition indicators, intensities, and Pearson r.
//! * [`fusion`] selects checkpoints and performs weighted probability fusion.
//! * [`mock`] is a deterministic synthetic scorer for end-to-end runs.
//! * [`pipeline`] ties these together behind the commands the CLI exposes.

pub mod corpus;
pub mod demo;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod mock;
mod ordmap;
pub mod pipeline;
pub mod rng;
pub mod score_log;

pub use corpus::{Dataset, DatasetFormat, DatasetSplit, LabelSpace, LabeledExample};
pub use demo::{AbstractPool, LabelMap, PromptBundle, Setting, SettingKind, Split};
pub use error::{Error, Result};
pub use fusion::{FusedPrediction, FusionMode, FusionPlan};
pub use metrics::{CompetitionSeries, DeltaSeries};
pub use mock::MockModelSpec;
pub use score_log::{ProbRecord, Trajectory};
