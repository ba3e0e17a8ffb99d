use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::DistanceMatrix;

/// Row `i` holds `exp(-gamma * d(i, ref_j)^2)` for each reference sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    /// Row index (into `ids`) of each reference column.
    pub references: Vec<usize>,
    pub gamma: f64,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FeatureMatrix {
    /// Wrap arbitrary points (row-major, `dim` columns) for clustering.
    pub fn from_points(ids: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != ids.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot form {} rows of width {dim}",
                values.len(),
                ids.len()
            )));
        }
        Ok(Self {
            ids,
            references: (0..dim).collect(),
            gamma: f64::NAN,
            values,
            warnings: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.references.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Median of a sample (mean of the middle pair for even counts).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn resolve_gamma(
    dist: &DistanceMatrix,
    gamma: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<f64> {
    if let Some(g) = gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::validation(
                "cluster.gamma",
                "must be positive and finite",
            ));
        }
        return Ok(g);
    }
    let mut nonzero: Vec<f64> = dist.upper_triangle().filter(|&d| d > 0.0).collect();
    match median(&mut nonzero) {
        Some(med) => Ok(1.0 / (2.0 * med * med)),
        None => {
            let msg = "all pairwise distances are zero; using gamma = 1".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
            Ok(1.0)
        }
    }
}

fn build(
    dist: &DistanceMatrix,
    references: Vec<usize>,
    gamma: Option<f64>,
) -> Result<FeatureMatrix> {
    let mut warnings = Vec::new();
    let gamma = resolve_gamma(dist, gamma, &mut warnings)?;
    let n = dist.len();
    let mut values = Vec::with_capacity(n * references.len());
    for i in 0..n {
        for &r in &references {
            let d = dist.get(i, r);
            values.push((-gamma * d * d).exp());
        }
    }
    Ok(FeatureMatrix {
        ids: dist.ids().to_vec(),
        references,
        gamma,
        values,
        warnings,
    })
}

/// RBF similarity features against every sequence. Without an explicit
/// `gamma`, uses `1 / (2 * median^2)` over the nonzero pairwise distances.
pub fn rbf_features(dist: &DistanceMatrix, gamma: Option<f64>) -> Result<FeatureMatrix> {
    if dist.is_empty() {
        return Err(Error::InvalidArgument("no sequences to featurize".into()));
    }
    build(dist, (0..dist.len()).collect(), gamma)
}

/// Like [`rbf_features`] but against a seeded random subset of `landmarks`
/// reference sequences (kept in index order).
pub fn rbf_features_with_landmarks(
    dist: &DistanceMatrix,
    gamma: Option<f64>,
    landmarks: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    let n = dist.len();
    if landmarks == 0 || landmarks > n {
        return Err(Error::validation(
            "cluster.landmarks",
            format!("must be between 1 and the number of sequences ({n})"),
        ));
    }
    let mut rng = rng_for(seed, &[0x1a4d]);
    let mut refs = index::sample(&mut rng, n, landmarks).into_vec();
    refs.sort_unstable();
    build(dist, refs, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(n: usize, vals: Vec<f64>) -> DistanceMatrix {
        DistanceMatrix::from_values((0..n).map(|i| format!("l{i}")).collect(), vals).unwrap()
    }

    #[test]
    fn median_pair_maps_to_exp_minus_half() {
        let d = dm(3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]);
        let f = rbf_features(&d, None).unwrap();
        assert!((f.gamma - 1.0 / 8.0).abs() < 1e-15);
        assert!((f.row(0)[2] - (-0.5f64).exp()).abs() < 1e-12);
        for i in 0..3 {
            assert_eq!(f.row(i)[i], 1.0);
        }
        assert!(f.row(0)[1] > f.row(0)[2] && f.row(0)[2] > f.row(1)[2]);
    }

    #[test]
    fn all_zero_distances_fall_back() {
        let d = dm(2, vec![0.0; 4]);
        let f = rbf_features(&d, None).unwrap();
        assert_eq!(f.gamma, 1.0);
        assert_eq!(f.warnings.len(), 1);
        assert!(f.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn landmarks_are_seeded_subset() {
        let seqs: Vec<Vec<u8>> = (0..10).map(|i| vec![0; i]).collect();
        let d =
            DistanceMatrix::from_sequences((0..10).map(|i| i.to_string()).collect(), &seqs, false);
        let a = rbf_features_with_landmarks(&d, None, 4, 5).unwrap();
        let b = rbf_features_with_landmarks(&d, None, 4, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 4);
        assert!(a.references.windows(2).all(|w| w[0] < w[1]));
        assert!(rbf_features_with_landmarks(&d, None, 11, 5).is_err());
        assert!(rbf_features(&d, Some(-1.0)).is_err());
    }
}
