//! Diversity-driven ensemble evaluation and selection.
//!
//! Works entirely from recorded predictions of a pool of base models: load the
//! pool, enumerate every candidate team, score teams with one of six
//! correctness-based diversity metrics, prune low-diversity teams (mean
//! threshold, per-focal-model learned cutoffs, or a fusion of several metrics),
//! then evaluate the survivors under a chosen voting rule.

pub mod consensus;
pub mod diversity;
pub mod error;
pub mod evaluation;
pub mod pool;
pub mod sampling;
pub mod selection;
pub mod synth;
pub mod teaming;
pub mod workflow;

pub use consensus::{ConsensusMethod, EnsemblePrediction, MemberWeights};
pub use diversity::{DiversityScore, MetricId, PairCounts};
pub use error::{Error, Result};
pub use evaluation::{SetReport, TeamEvaluation};
pub use pool::{CorrectnessMatrix, ModelRecord, PredictionPool, ProbMatrix};
pub use sampling::{NegativeSampleSet, NegativeScheme};
pub use selection::{FqMode, SelectedSet, SelectionMethod, SelectionRule};
pub use synth::SynthConfig;
pub use teaming::{CandidateSet, EnsembleTeam};
