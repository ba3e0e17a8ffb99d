//! Strategy clustering: edit distances between symbol sequences, RBF
//! similarity features, k-means with silhouette/elbow diagnostics and
//! phase-wise tactic summaries.
//!
//! Everything here is generic over the sequence alphabet, so decoded tactic
//! paths and raw process sequences go through the same code.

mod elbow;
mod features;
mod kmeans;
mod levenshtein;
mod phase;
mod silhouette;

pub use elbow::{elbow_scan, ElbowRow, ElbowTable};
pub use features::{median, rbf_features, rbf_features_with_landmarks, FeatureMatrix};
pub use kmeans::{kmeans, kmeans_with_init, ClusterAssignment, KMeansOptions};
pub use levenshtein::{levenshtein, DistanceMatrix};
pub use phase::{phase_distribution, PhaseCell, PhaseDistribution, TacticProportions};
pub use silhouette::{silhouette, silhouette_from_distances, silhouette_with};
