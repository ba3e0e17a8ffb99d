use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean symbol mix of one cluster within one relative-position bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub cluster: usize,
    pub bin: usize,
    /// Learners with at least one position in this bin.
    pub n_learners: usize,
    pub proportions: Vec<f64>,
}

/// Mean whole-task symbol mix per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticProportions {
    pub cluster: usize,
    pub n_learners: usize,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution {
    pub bins: usize,
    pub n_symbols: usize,
    pub cells: Vec<PhaseCell>,
    pub whole_task: Vec<TacticProportions>,
}

fn add_scaled(acc: &mut [f64], counts: &[f64]) {
    let total: f64 = counts.iter().sum();
    for (a, c) in acc.iter_mut().zip(counts) {
        *a += c / total;
    }
}

/// Position `t` of a length-`T` sequence falls in bin `floor(t * bins / T)`.
/// Each learner contributes its own proportions to a (cluster, bin) average;
/// learners with no positions in a bin are left out of that bin.
pub fn phase_distribution(
    sequences: &[(String, Vec<usize>)],
    labels: &BTreeMap<String, usize>,
    n_symbols: usize,
    bins: usize,
) -> Result<PhaseDistribution> {
    if bins == 0 || n_symbols == 0 {
        return Err(Error::InvalidArgument(
            "bins and symbol count must be positive".into(),
        ));
    }
    let mut missing = Vec::new();
    let ids: std::collections::BTreeSet<&String> = sequences.iter().map(|(id, _)| id).collect();
    for (id, _) in sequences {
        if !labels.contains_key(id) {
            missing.push(id.clone());
        }
    }
    let extra: Vec<String> = labels
        .keys()
        .filter(|k| !ids.contains(k))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::LearnerMismatch {
            only_a: missing,
            only_b: extra,
        });
    }
    let k = labels.values().max().map_or(0, |&m| m + 1);
    let mut sums = vec![0.0; k * bins * n_symbols];
    let mut counts = vec![0usize; k * bins];
    let mut whole = vec![0.0; k * n_symbols];
    let mut whole_n = vec![0usize; k];
    let mut bin_counts = vec![0.0; bins * n_symbols];
    for (id, seq) in sequences {
        if seq.is_empty() {
            continue;
        }
        let c = labels[id];
        let len = seq.len();
        bin_counts.iter_mut().for_each(|x| *x = 0.0);
        for (t, &s) in seq.iter().enumerate() {
            if s >= n_symbols {
                return Err(Error::InvalidArgument(format!(
                    "learner {id}: symbol {s} out of range"
                )));
            }
            bin_counts[t * bins / len * n_symbols + s] += 1.0;
        }
        let mut all = vec![0.0; n_symbols];
        for b in 0..bins {
            let row = &bin_counts[b * n_symbols..(b + 1) * n_symbols];
            for (a, r) in all.iter_mut().zip(row) {
                *a += r;
            }
            if row.iter().any(|&x| x > 0.0) {
                let cell = c * bins + b;
                counts[cell] += 1;
                add_scaled(&mut sums[cell * n_symbols..(cell + 1) * n_symbols], row);
            }
        }
        whole_n[c] += 1;
        add_scaled(&mut whole[c * n_symbols..(c + 1) * n_symbols], &all);
    }
    let mut cells = Vec::new();
    for c in 0..k {
        for b in 0..bins {
            let cell = c * bins + b;
            let n = counts[cell];
            let proportions = if n == 0 {
                vec![0.0; n_symbols]
            } else {
                sums[cell * n_symbols..(cell + 1) * n_symbols]
                    .iter()
                    .map(|s| s / n as f64)
                    .collect()
            };
            cells.push(PhaseCell {
                cluster: c,
                bin: b,
                n_learners: n,
                proportions,
            });
        }
    }
    let whole_task = (0..k)
        .map(|c| TacticProportions {
            cluster: c,
            n_learners: whole_n[c],
            proportions: whole[c * n_symbols..(c + 1) * n_symbols]
                .iter()
                .map(|s| {
                    if whole_n[c] > 0 {
                        s / whole_n[c] as f64
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
        .collect();
    Ok(PhaseDistribution {
        bins,
        n_symbols,
        cells,
        whole_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn constant_tactic_fills_every_bin() {
        let seqs = vec![("a".to_string(), vec![2; 25])];
        let pd = phase_distribution(&seqs, &labels(&[("a", 0)]), 3, 10).unwrap();
        for cell in &pd.cells {
            assert_eq!(cell.proportions, vec![0.0, 0.0, 1.0]);
        }
        assert_eq!(pd.whole_task[0].proportions, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn hand_computed_two_learners() {
        // a: [0,0,1,1] -> bin0 {0,0}, bin1 {1,1}; b: [0,1,1] -> bin0 {0,1} (t=0,1), bin1 {1} (t=2)
        let seqs = vec![
            ("a".to_string(), vec![0, 0, 1, 1]),
            ("b".to_string(), vec![0, 1, 1]),
        ];
        let pd = phase_distribution(&seqs, &labels(&[("a", 0), ("b", 0)]), 2, 2).unwrap();
        assert_eq!(pd.cells[0].proportions, vec![0.75, 0.25]);
        assert_eq!(pd.cells[1].proportions, vec![0.0, 1.0]);
        let whole = &pd.whole_task[0].proportions;
        assert!((whole[0] - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn short_sequences_leave_bins_empty_not_nan() {
        let seqs = vec![
            ("a".to_string(), vec![0, 1]),
            ("b".to_string(), vec![1, 1, 0, 0, 1]),
        ];
        let pd = phase_distribution(&seqs, &labels(&[("a", 0), ("b", 1)]), 2, 10).unwrap();
        for cell in &pd.cells {
            assert!(cell.proportions.iter().all(|p| p.is_finite()));
            let s: f64 = cell.proportions.iter().sum();
            if cell.n_learners > 0 {
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(
            pd.cells
                .iter()
                .filter(|c| c.cluster == 0 && c.n_learners > 0)
                .count(),
            2
        );
    }

    #[test]
    fn mismatched_learners_rejected() {
        let seqs = vec![("a".to_string(), vec![0])];
        assert!(phase_distribution(&seqs, &labels(&[("b", 0)]), 1, 2).is_err());
    }
}
