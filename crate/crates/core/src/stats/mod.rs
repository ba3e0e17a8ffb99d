//! Nonparametric comparison of task scores across strategy clusters.

mod mann_whitney;
mod shapiro;
mod summary;

pub use mann_whitney::{effect_size_r, mann_whitney_u, MannWhitney, DEFAULT_EXACT_THRESHOLD};
pub use shapiro::{shapiro_wilk, ShapiroWilk};
pub use summary::{
    group_summary, holm_adjust, read_scores_csv, GroupComparison, GroupStats, PairComparison,
    ScoreTable, StatsOptions,
};
