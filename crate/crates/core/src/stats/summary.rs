use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mann_whitney::{effect_size_r, mann_whitney_u, DEFAULT_EXACT_THRESHOLD};
use super::shapiro::{shapiro_wilk, ShapiroWilk};

/// Essay score per learner.
pub type ScoreTable = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsOptions {
    pub alpha: f64,
    pub exact_threshold: usize,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }
}

impl StatsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation("stats.alpha", "must lie in (0, 1)"));
        }
        if self.exact_threshold > 24 {
            return Err(Error::validation(
                "stats.exact_threshold",
                "at most 24 (enumeration is exponential)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub cluster: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single learner.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// Reported U: that of `cluster_a`, the lower-numbered cluster.
    pub u: f64,
    pub u_b: f64,
    pub u_min: f64,
    pub z: f64,
    pub p: f64,
    pub exact: bool,
    /// `|1 - 2U / (n_a n_b)|`.
    pub r: f64,
    /// `|z| / sqrt(n_a + n_b)`.
    pub r_z: f64,
    pub p_holm: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub alpha: f64,
    pub normality: Option<ShapiroWilk>,
    pub groups: Vec<GroupStats>,
    pub pairs: Vec<PairComparison>,
    /// Labelled learners without a score.
    pub missing_scores: Vec<String>,
    pub warnings: Vec<String>,
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Normality check on the pooled scores followed by every pairwise
/// Mann-Whitney comparison between clusters that have scored learners.
pub fn group_summary(
    scores: &ScoreTable,
    labels: &BTreeMap<String, usize>,
    options: &StatsOptions,
) -> Result<GroupComparison> {
    options.validate()?;
    let mut warnings = Vec::new();
    let mut missing = Vec::new();
    let mut by_cluster: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (id, &c) in labels {
        by_cluster.entry(c).or_default();
        match scores.get(id) {
            Some(&s) => by_cluster.get_mut(&c).expect("inserted").push(s),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        warnings.push(format!(
            "{} labelled learners have no score and are excluded",
            missing.len()
        ));
    }
    let unlabelled = scores.keys().filter(|k| !labels.contains_key(*k)).count();
    if unlabelled > 0 {
        warnings.push(format!(
            "{unlabelled} scored learners have no cluster label and are ignored"
        ));
    }
    by_cluster.retain(|c, v| {
        if v.is_empty() {
            warnings.push(format!(
                "cluster {c} has no scored learners and is excluded"
            ));
        }
        !v.is_empty()
    });
    if by_cluster.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two clusters with scored learners".into(),
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let pooled: Vec<f64> = by_cluster.values().flatten().copied().collect();
    let normality = match shapiro_wilk(&pooled) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("normality test skipped: {e}"));
            None
        }
    };
    let groups: Vec<GroupStats> = by_cluster
        .iter()
        .map(|(&cluster, xs)| {
            let (mean, sd) = mean_sd(xs);
            GroupStats {
                cluster,
                n: xs.len(),
                mean,
                sd,
            }
        })
        .collect();
    let clusters: Vec<usize> = by_cluster.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, &ca) in clusters.iter().enumerate() {
        for &cb in &clusters[i + 1..] {
            let (a, b) = (&by_cluster[&ca], &by_cluster[&cb]);
            let t = mann_whitney_u(a, b, options.exact_threshold)?;
            pairs.push(PairComparison {
                cluster_a: ca,
                cluster_b: cb,
                n_a: t.n_a,
                n_b: t.n_b,
                u: t.u_a,
                u_b: t.u_b,
                u_min: t.u_min,
                z: t.z,
                p: t.p,
                exact: t.exact,
                r: effect_size_r(t.u_a, t.n_a, t.n_b)?,
                r_z: t.z.abs() / ((t.n_a + t.n_b) as f64).sqrt(),
                p_holm: 0.0,
                significant: t.p < options.alpha,
            });
        }
    }
    let adjusted = holm_adjust(&pairs.iter().map(|p| p.p).collect::<Vec<_>>());
    for (p, adj) in pairs.iter_mut().zip(adjusted) {
        p.p_holm = adj;
    }
    Ok(GroupComparison {
        alpha: options.alpha,
        normality,
        groups,
        pairs,
        missing_scores: missing,
        warnings,
    })
}

/// Reads `learner_id,score` rows.
pub fn read_scores_csv<R: Read>(reader: R, source: &str) -> Result<ScoreTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "learner_id" || &headers[1] != "score" {
        return Err(Error::Ingest {
            path: source.into(),
            line: 1,
            message: "expected header `learner_id,score`".into(),
        });
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Ingest {
            path: source.into(),
            line,
            message,
        };
        let score: f64 = row[1]
            .parse()
            .map_err(|_| bad(format!("score {:?} is not a number", &row[1])))?;
        if !(score.is_finite() && score >= 0.0) {
            return Err(bad(format!("score {score} must be finite and nonnegative")));
        }
        if out.insert(row[0].to_string(), score).is_some() {
            return Err(bad(format!("learner {} scored twice", &row[0])));
        }
    }
    Ok(out)
}
