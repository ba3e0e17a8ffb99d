use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kmeans::{kmeans_with_init, ClusterAssignment, KMeansOptions};
use super::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowTable {
    pub rows: Vec<ElbowRow>,
    /// k with the highest silhouette (lowest k on ties).
    pub suggested_k: usize,
    /// k with the largest second difference of inertia, when at least three
    /// consecutive k values were scanned.
    pub knee_k: Option<usize>,
}

/// Cluster at every k in `k_range`, returning the diagnostics table and the
/// assignments themselves.
///
/// Each k > k_min also tries a warm start from the previous best centroids
/// plus the point farthest from them, so the reported inertia never increases
/// with k.
pub fn elbow_scan(
    x: &FeatureMatrix,
    k_range: RangeInclusive<usize>,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<(ElbowTable, Vec<ClusterAssignment>)> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || lo > hi || hi > x.n_rows() {
        return Err(Error::validation(
            "cluster.k_range",
            format!("must lie within [2, {}] and be nonempty", x.n_rows()),
        ));
    }
    let dim = x.dim();
    let mut fits: Vec<ClusterAssignment> = Vec::new();
    for k in k_range {
        let warm = fits.last().map(|prev| {
            let mut c = prev.centroids.clone();
            let far = (0..x.n_rows())
                .map(|i| {
                    let l = prev.labels[i];
                    let d: f64 = x
                        .row(i)
                        .iter()
                        .zip(&prev.centroids[l * dim..(l + 1) * dim])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (i, d)
                })
                .fold((0, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            c.extend_from_slice(x.row(far.0));
            c
        });
        fits.push(kmeans_with_init(x, k, seed, opts, warm)?);
    }
    let rows: Vec<ElbowRow> = fits
        .iter()
        .map(|f| ElbowRow {
            k: f.k,
            inertia: f.inertia,
            silhouette: f.silhouette,
        })
        .collect();
    let mut suggested = rows[0].k;
    let mut best_sil = f64::NEG_INFINITY;
    for r in &rows {
        if let Some(s) = r.silhouette {
            if s > best_sil {
                best_sil = s;
                suggested = r.k;
            }
        }
    }
    let knee_k = (1..rows.len().saturating_sub(1))
        .map(|i| {
            (
                rows[i].k,
                rows[i - 1].inertia - 2.0 * rows[i].inertia + rows[i + 1].inertia,
            )
        })
        .fold(None::<(usize, f64)>, |best, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|(k, _)| k);
    Ok((
        ElbowTable {
            rows,
            suggested_k: suggested,
            knee_k,
        },
        fits,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn three_blobs(seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut vals = Vec::new();
        for &(cx, cy) in &[(0.0, 0.0), (10.0, 0.0), (5.0, 9.0)] {
            for _ in 0..25 {
                vals.push(cx + noise.sample(&mut rng));
                vals.push(cy + noise.sample(&mut rng));
            }
        }
        FeatureMatrix::from_points((0..75).map(|i| i.to_string()).collect(), 2, vals).unwrap()
    }

    #[test]
    fn peaks_at_planted_k_and_inertia_nonincreasing() {
        let x = three_blobs(4);
        let (table, fits) = elbow_scan(&x, 2..=8, 1, &KMeansOptions::default()).unwrap();
        assert_eq!(table.suggested_k, 3);
        assert_eq!(table.knee_k, Some(3));
        assert_eq!(fits.len(), 7);
        for w in table.rows.windows(2) {
            assert!(w[1].inertia <= w[0].inertia + 1e-9);
        }
    }

    #[test]
    fn single_k_range() {
        let x = three_blobs(2);
        let (table, _) = elbow_scan(&x, 4..=4, 1, &KMeansOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.suggested_k, 4);
        assert_eq!(table.knee_k, None);
        assert!(elbow_scan(&x, 1..=3, 1, &KMeansOptions::default()).is_err());
    }
}
