use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{DistanceMatrix, FeatureMatrix};

/// Mean silhouette for `n` points under an arbitrary distance. Points alone
/// in their cluster score 0.
pub fn silhouette_with<D>(n: usize, labels: &[usize], dist: D) -> Result<f64>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    if labels.len() != n || n == 0 {
        return Err(Error::InvalidArgument(
            "one label per point required".into(),
        ));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidArgument(
            "silhouette needs at least two nonempty clusters".into(),
        ));
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dist(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Silhouette with Euclidean distance in feature space.
pub fn silhouette(x: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    silhouette_with(x.n_rows(), labels, |i, j| {
        x.row(i)
            .iter()
            .zip(x.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}

/// Silhouette on precomputed (e.g. edit) distances.
pub fn silhouette_from_distances(d: &DistanceMatrix, labels: &[usize]) -> Result<f64> {
    silhouette_with(d.len(), labels, |i, j| d.get(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn pts(vals: Vec<f64>, dim: usize) -> FeatureMatrix {
        let n = vals.len() / dim;
        FeatureMatrix::from_points((0..n).map(|i| i.to_string()).collect(), dim, vals).unwrap()
    }

    #[test]
    fn singletons_score_zero() {
        let x = pts(vec![0.0, 5.0], 1);
        assert_eq!(silhouette(&x, &[0, 1]).unwrap(), 0.0);
        assert!(silhouette(&x, &[0, 0]).is_err());
    }

    #[test]
    fn tight_far_pairs_near_one() {
        let x = pts(vec![0.0, 0.01, 100.0, 100.01], 1);
        assert!((silhouette(&x, &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn random_labels_on_noise_near_zero() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..200 * 3).map(|_| rng.sample(StandardNormal)).collect();
            let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
            let s = silhouette(&pts(vals, 3), &labels).unwrap();
            assert!(s.abs() < 0.1, "seed {seed}: {s}");
        }
    }

    #[test]
    fn label_permutation_invariant() {
        let x = pts(vec![0.0, 1.0, 1.5, 7.0, 8.0, 3.0], 1);
        let a = silhouette(&x, &[0, 0, 0, 1, 1, 2]).unwrap();
        let b = silhouette(&x, &[2, 2, 2, 0, 0, 1]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
