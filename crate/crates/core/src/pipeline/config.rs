use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::KMeansOptions;
use crate::error::{Error, Result};
use crate::hmm::{FitOptions, SelectionCriterion};
use crate::preprocess::PreprocessOptions;
use crate::stats::StatsOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Raw `learner_id,timestamp_ms,event_kind,detail` events.
    Events,
    /// Pre-coded `learner_id,seq_index,action`.
    Actions,
    /// Pre-coded `learner_id,seq_index,process_code`.
    Processes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub mode: InputMode,
    pub path: PathBuf,
    /// `learner_id,score`; the stats stage is skipped without it.
    #[serde(default)]
    pub scores: Option<PathBuf>,
    #[serde(default)]
    pub action_library: Option<PathBuf>,
    #[serde(default)]
    pub process_library: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmmConfig {
    pub min_states: usize,
    pub max_states: usize,
    /// Fit this many states regardless of the criterion (still reported).
    pub n_states: Option<usize>,
    pub criterion: SelectionCriterion,
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub smoothing: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            min_states: 2,
            max_states: 10,
            n_states: None,
            criterion: SelectionCriterion::Bic,
            restarts: f.restarts,
            tol: f.tol,
            max_iter: f.max_iter,
            smoothing: f.smoothing,
        }
    }
}

impl HmmConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            tol: self.tol,
            max_iter: self.max_iter,
            smoothing: self.smoothing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SilhouetteSpace {
    /// Euclidean distance between RBF feature rows.
    #[default]
    Features,
    /// The edit distances themselves.
    Distances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    /// Final cluster count; the silhouette suggestion is used when unset.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub gamma: Option<f64>,
    pub landmarks: Option<usize>,
    /// Divide each edit distance by the longer sequence length.
    pub normalize: bool,
    pub silhouette_space: SilhouetteSpace,
    pub bins: usize,
    pub kmeans: KMeansOptions,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: None,
            k_min: 2,
            k_max: 10,
            gamma: None,
            landmarks: None,
            normalize: false,
            silhouette_space: SilhouetteSpace::Features,
            bins: 10,
            kmeans: KMeansOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Runs are written to `<dir>/<run id>`.
    pub dir: PathBuf,
    /// Add wall-clock stage timings to the manifest (breaks byte-identity).
    pub record_timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub preprocess: PreprocessOptions,
    #[serde(default)]
    pub hmm: HmmConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub stats: StatsOptions,
    /// Cluster the process sequences directly, without hidden tactics.
    #[serde(default)]
    pub benchmark_mode: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::validation("config", e.to_string()))
    }

    /// Load a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.input.path);
        for p in [
            &mut cfg.input.scores,
            &mut cfg.input.action_library,
            &mut cfg.input.process_library,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
        rebase(base, &mut cfg.output.dir);
        Ok(cfg)
    }

    /// Checks everything that can be checked before touching the data.
    pub fn validate(&self) -> Result<()> {
        for p in std::iter::once(&self.input.path).chain(
            [
                &self.input.scores,
                &self.input.action_library,
                &self.input.process_library,
            ]
            .into_iter()
            .flatten(),
        ) {
            if !p.is_file() {
                return Err(Error::validation(
                    "input",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        self.preprocess.validate()?;
        self.stats.validate()?;
        self.hmm.validate()?;
        self.cluster.validate()
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        let h = self;
        h.fit_options().validate()?;
        if h.max_iter == 0 {
            return Err(Error::validation("hmm.max_iter", "must be at least 1"));
        }
        if h.min_states == 0 || h.min_states > h.max_states {
            return Err(Error::validation(
                "hmm.min_states",
                "need 1 <= min_states <= max_states",
            ));
        }
        if h.n_states == Some(0) {
            return Err(Error::validation("hmm.n_states", "must be at least 1"));
        }
        Ok(())
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self;
        if c.k_min < 2 || c.k_min > c.k_max {
            return Err(Error::validation(
                "cluster.k_min",
                "need 2 <= k_min <= k_max",
            ));
        }
        if matches!(c.k, Some(k) if k < 2) {
            return Err(Error::validation("cluster.k", "must be at least 2"));
        }
        if matches!(c.gamma, Some(g) if !(g > 0.0 && g.is_finite())) {
            return Err(Error::validation("cluster.gamma", "must be positive"));
        }
        if c.landmarks == Some(0) {
            return Err(Error::validation("cluster.landmarks", "must be at least 1"));
        }
        if c.bins == 0 {
            return Err(Error::validation("cluster.bins", "must be at least 1"));
        }
        if c.kmeans.n_init == 0
            || c.kmeans.max_iter == 0
            || c.kmeans.tol.is_nan()
            || c.kmeans.tol < 0.0
        {
            return Err(Error::validation(
                "cluster.kmeans",
                "n_init and max_iter must be positive, tol nonnegative",
            ));
        }
        Ok(())
    }
}
