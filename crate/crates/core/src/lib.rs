//! Hidden-tactic detection and strategy clustering for coded learning traces.
//!
//! The pipeline codes raw trace events into self-regulated-learning process
//! sequences ([`trace`]), filters the cohort ([`preprocess`]), fits a
//! categorical HMM whose hidden states act as tactics ([`hmm`]), clusters the
//! decoded tactic sequences into strategies ([`cluster`]), compares task
//! scores across strategies ([`stats`]) and measures agreement with a
//! benchmark clustering of the raw process sequences ([`agreement`]).
//! [`synth`] generates cohorts with known ground truth and [`pipeline`] wires
//! everything together behind a JSON config.

pub mod agreement;
pub mod cluster;
pub mod error;
pub mod hmm;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod trace;

pub use agreement::{AgreementScores, ContingencyTable};
pub use cluster::{ClusterAssignment, DistanceMatrix, FeatureMatrix, PhaseDistribution};
pub use error::{Error, Result};
pub use hmm::{
    Alphabet, CategoricalHmm, FitOptions, FitResult, ModelSelectionReport, TacticSequence,
};
pub use pipeline::{compare_runs, run_pipeline, ComparisonReport, PipelineConfig, RunManifest};
pub use preprocess::{CohortFilterReport, PreprocessOptions};
pub use stats::{GroupComparison, ScoreTable};
pub use synth::{generate_cohort, Cohort, CohortSpec};
pub use trace::{
    ActionLibrary, ActionSequence, ProcessCode, ProcessLibrary, ProcessSequence, TraceRecord,
};
