use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Unit-cost edit distance (insertions, deletions, substitutions). Uses one
/// row of `min(|a|, |b|) + 1` cells.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, x) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[short.len()]
}

/// Symmetric matrix of pairwise edit distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Pairwise distances between `sequences`; with `normalize`, each
    /// distance is divided by the longer sequence length.
    pub fn from_sequences<T, S>(ids: Vec<String>, sequences: &[S], normalize: bool) -> Self
    where
        T: PartialEq + Sync,
        S: AsRef<[T]> + Sync,
    {
        assert_eq!(ids.len(), sequences.len(), "one id per sequence");
        let n = sequences.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| {
                        let (a, b) = (sequences[i].as_ref(), sequences[j].as_ref());
                        let d = levenshtein(a, b) as f64;
                        let longest = a.len().max(b.len());
                        if normalize && longest > 0 {
                            d / longest as f64
                        } else {
                            d
                        }
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { ids, values }
    }

    /// Wrap a precomputed square matrix (checked for symmetry and zero diagonal).
    pub fn from_values(ids: Vec<String>, values: Vec<f64>) -> crate::Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(crate::Error::InvalidArgument(format!(
                "distance matrix needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(crate::Error::InvalidArgument(format!(
                    "nonzero diagonal at {i}"
                )));
            }
            for j in 0..i {
                let d = values[i * n + j];
                if !(d >= 0.0 && d.is_finite()) || d != values[j * n + i] {
                    return Err(crate::Error::InvalidArgument(format!(
                        "distance ({i}, {j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { ids, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Off-diagonal distances from the upper triangle.
    pub fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| self.get(i, j)))
    }
}
