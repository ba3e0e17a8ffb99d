use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::silhouette::silhouette;
use super::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansOptions {
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop when no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Mean silhouette in feature space; `None` when `k == 1`.
    pub silhouette: Option<f64>,
    pub n_iterations: usize,
    pub converged: bool,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init<R: Rng>(x: &FeatureMatrix, k: usize, rng: &mut R) -> Vec<f64> {
    let n = x.n_rows();
    let mut centroids = Vec::with_capacity(k * x.dim());
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick);
        centroids.extend_from_slice(c);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), c));
        }
    }
    centroids
}

fn assign(x: &FeatureMatrix, centroids: &[f64], k: usize, labels: &mut [usize], dists: &mut [f64]) {
    let dim = x.dim();
    for i in 0..x.n_rows() {
        let row = x.row(i);
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let d = sq_dist(row, &centroids[c * dim..(c + 1) * dim]);
            if d < best.0 {
                best = (d, c);
            }
        }
        labels[i] = best.1;
        dists[i] = best.0;
    }
}

/// Give every empty cluster the point farthest from its centroid, taken
/// from a cluster that can spare it.
fn repair_empty(k: usize, labels: &mut [usize], dists: &mut [f64]) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a cluster with two or more points");
        sizes[labels[i]] -= 1;
        sizes[c] += 1;
        labels[i] = c;
        dists[i] = 0.0;
    }
}

fn means(x: &FeatureMatrix, k: usize, labels: &[usize]) -> Vec<f64> {
    let dim = x.dim();
    let mut sums = vec![0.0; k * dim];
    let mut sizes = vec![0usize; k];
    // Fixed index order keeps the float sums reproducible.
    for (i, &l) in labels.iter().enumerate() {
        sizes[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        let inv = 1.0 / sizes[c] as f64;
        sums[c * dim..(c + 1) * dim]
            .iter_mut()
            .for_each(|s| *s *= inv);
    }
    sums
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    inertia: f64,
    n_iterations: usize,
    converged: bool,
}

fn lloyd(x: &FeatureMatrix, k: usize, mut centroids: Vec<f64>, opts: &KMeansOptions) -> Run {
    let n = x.n_rows();
    let dim = x.dim();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iter {
        iters += 1;
        assign(x, &centroids, k, &mut labels, &mut dists);
        repair_empty(k, &mut labels, &mut dists);
        let next = means(x, k, &labels);
        let shift = (0..k)
            .map(|c| {
                sq_dist(
                    &next[c * dim..(c + 1) * dim],
                    &centroids[c * dim..(c + 1) * dim],
                )
                .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;
        if shift < opts.tol {
            converged = true;
            break;
        }
    }
    // Centroids are the means of the final labels, so inertia is the
    // within-cluster sum of squares of this partition.
    let inertia = (0..n)
        .map(|i| sq_dist(x.row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    Run {
        labels,
        centroids,
        inertia,
        n_iterations: iters,
        converged,
    }
}

fn check(x: &FeatureMatrix, k: usize, opts: &KMeansOptions) -> Result<()> {
    if k == 0 || k > x.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be between 1 and the number of points ({})",
            x.n_rows()
        )));
    }
    if opts.n_init == 0 || opts.max_iter == 0 {
        return Err(Error::validation(
            "cluster.kmeans",
            "n_init and max_iter must be at least 1",
        ));
    }
    Ok(())
}

fn finish(x: &FeatureMatrix, k: usize, run: Run) -> Result<ClusterAssignment> {
    let sil = if k >= 2 {
        Some(silhouette(x, &run.labels)?)
    } else {
        None
    };
    Ok(ClusterAssignment {
        k,
        ids: x.ids.clone(),
        labels: run.labels,
        centroids: run.centroids,
        inertia: run.inertia,
        silhouette: sil,
        n_iterations: run.n_iterations,
        converged: run.converged,
    })
}

/// Best of `n_init` k-means++ / Lloyd runs by inertia. Run `r` draws from
/// the stream derived from `(seed, k, r)`; ties keep the lowest run index.
pub fn kmeans(
    x: &FeatureMatrix,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<ClusterAssignment> {
    kmeans_with_init(x, k, seed, opts, None)
}

/// [`kmeans`] with one extra warm-start candidate (`k x dim` centroids)
/// competing against the random initializations.
pub fn kmeans_with_init(
    x: &FeatureMatrix,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
    warm_start: Option<Vec<f64>>,
) -> Result<ClusterAssignment> {
    check(x, k, opts)?;
    let mut runs: Vec<Run> = (0..opts.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, &[k as u64, r as u64]);
            lloyd(x, k, plus_plus_init(x, k, &mut rng), opts)
        })
        .collect();
    if let Some(init) = warm_start {
        if init.len() != k * x.dim() {
            return Err(Error::InvalidArgument(
                "warm start has the wrong shape".into(),
            ));
        }
        runs.push(lloyd(x, k, init, opts));
    }
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.inertia < runs[best].inertia {
            best = i;
        }
    }
    finish(x, k, runs.swap_remove(best))
}
