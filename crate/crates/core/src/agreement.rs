//! Agreement between two clusterings of the same learners: contingency
//! table, homogeneity / completeness / V-measure, and Sankey links.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are clustering A (the reference classes), columns clustering B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.is_empty() || cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument(
                "contingency table must be a nonempty rectangle".into(),
            ));
        }
        Ok(Self {
            row_labels: (0..counts.len()).collect(),
            col_labels: (0..cols).collect(),
            counts,
        })
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }

    pub fn transpose(&self) -> Self {
        Self {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            counts: (0..self.col_labels.len())
                .map(|j| self.counts.iter().map(|r| r[j]).collect())
                .collect(),
        }
    }
}

/// Cross-tabulate two labelings of the same learner set.
pub fn contingency(
    a: &BTreeMap<String, usize>,
    b: &BTreeMap<String, usize>,
) -> Result<ContingencyTable> {
    let only_a: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).cloned().collect();
    let only_b: Vec<String> = b.keys().filter(|k| !a.contains_key(*k)).cloned().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(Error::LearnerMismatch { only_a, only_b });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("no learners to compare".into()));
    }
    let mut rows: Vec<usize> = a.values().copied().collect();
    let mut cols: Vec<usize> = b.values().copied().collect();
    rows.sort_unstable();
    rows.dedup();
    cols.sort_unstable();
    cols.dedup();
    let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
    for (id, la) in a {
        let i = rows.binary_search(la).expect("collected");
        let j = cols.binary_search(&b[id]).expect("collected");
        counts[i][j] += 1;
    }
    Ok(ContingencyTable {
        row_labels: rows,
        col_labels: cols,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementScores {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(totals: &[u64], n: f64) -> f64 {
    totals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `H(rows | cols)` in nats.
fn conditional_entropy(t: &ContingencyTable, n: f64) -> f64 {
    let cols = t.col_totals();
    let mut h = 0.0;
    for row in &t.counts {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                h -= c as f64 / n * (c as f64 / cols[j] as f64).ln();
            }
        }
    }
    h
}

/// Homogeneity `1 - H(rows|cols)/H(rows)`, completeness `1 - H(cols|rows)/H(cols)`
/// and their harmonic mean, treating rows as the reference classes.
pub fn homogeneity_completeness_v(t: &ContingencyTable) -> Result<AgreementScores> {
    let total = t.total();
    if total == 0 {
        return Err(Error::InvalidArgument("contingency table is empty".into()));
    }
    let n = total as f64;
    let h_rows = entropy(&t.row_totals(), n);
    let h_cols = entropy(&t.col_totals(), n);
    let homogeneity = if h_rows == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(t, n) / h_rows
    };
    let completeness = if h_cols == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(&t.transpose(), n) / h_cols
    };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(AgreementScores {
        homogeneity,
        completeness,
        v_measure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: usize,
    pub target: usize,
    pub count: u64,
}

/// One link per nonzero cell, in row-major order. `source`/`target` are the
/// cluster labels of A and B.
pub fn sankey_links(t: &ContingencyTable) -> Vec<SankeyLink> {
    let mut out = Vec::new();
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                out.push(SankeyLink {
                    source: t.row_labels[i],
                    target: t.col_labels[j],
                    count: c,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: String,
    pub side: String,
    pub cluster: usize,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyGraphLink {
    pub source: String,
    pub target: String,
    pub value: u64,
}

/// `sankey.json`: nodes `a{k}` (rows) and `b{k}` (columns) plus weighted links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyGraph {
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyGraphLink>,
}

pub fn sankey_graph(t: &ContingencyTable, side_a: &str, side_b: &str) -> SankeyGraph {
    let mut nodes = Vec::new();
    for (l, s) in t.row_labels.iter().zip(t.row_totals()) {
        nodes.push(SankeyNode {
            id: format!("a{l}"),
            side: side_a.to_string(),
            cluster: *l,
            size: s,
        });
    }
    for (l, s) in t.col_labels.iter().zip(t.col_totals()) {
        nodes.push(SankeyNode {
            id: format!("b{l}"),
            side: side_b.to_string(),
            cluster: *l,
            size: s,
        });
    }
    let links = sankey_links(t)
        .into_iter()
        .map(|l| SankeyGraphLink {
            source: format!("a{}", l.source),
            target: format!("b{}", l.target),
            value: l.count,
        })
        .collect();
    SankeyGraph { nodes, links }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn published() -> ContingencyTable {
        ContingencyTable::from_counts(vec![
            vec![0, 73, 0, 16],
            vec![7, 0, 9, 0],
            vec![12, 0, 0, 22],
        ])
        .unwrap()
    }

    #[test]
    fn identical_labelings() {
        let a: BTreeMap<String, usize> = (0..10)
            .map(|i| (format!("l{i}"), usize::from(i >= 6)))
            .collect();
        let t = contingency(&a, &a).unwrap();
        assert_eq!(t.counts, vec![vec![6, 0], vec![0, 4]]);
        let s = homogeneity_completeness_v(&t).unwrap();
        assert_eq!(
            (s.homogeneity, s.completeness, s.v_measure),
            (1.0, 1.0, 1.0)
        );
        assert!(sankey_links(&t).iter().all(|l| l.source == l.target));
    }

    #[test]
    fn mismatch_lists_both_sides() {
        let a: BTreeMap<String, usize> = [("x".to_string(), 0), ("y".to_string(), 1)].into();
        let b: BTreeMap<String, usize> = [("x".to_string(), 0), ("z".to_string(), 1)].into();
        match contingency(&a, &b).unwrap_err() {
            Error::LearnerMismatch { only_a, only_b } => {
                assert_eq!(only_a, vec!["y"]);
                assert_eq!(only_b, vec!["z"]);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn published_table() {
        let t = published();
        assert_eq!(t.total(), 139);
        let s = homogeneity_completeness_v(&t).unwrap();
        assert!((s.homogeneity - 0.685).abs() < 3e-3);
        assert!((s.completeness - 0.527).abs() < 3e-3);
        assert!((s.v_measure - 0.596).abs() < 3e-3);
        let counts: Vec<u64> = sankey_links(&t).iter().map(|l| l.count).collect();
        assert_eq!(counts, vec![73, 16, 7, 9, 12, 22]);
    }

    #[test]
    fn single_column_degenerate() {
        let t = ContingencyTable::from_counts(vec![vec![3], vec![5]]).unwrap();
        let s = homogeneity_completeness_v(&t).unwrap();
        assert_eq!((s.homogeneity, s.completeness), (0.0, 1.0));
        assert!(
            homogeneity_completeness_v(&ContingencyTable::from_counts(vec![vec![0]]).unwrap())
                .is_err()
        );
    }

    fn table() -> impl Strategy<Value = ContingencyTable> {
        (1usize..5, 1usize..5)
            .prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(0u64..20, c), r))
            .prop_filter("nonempty", |rows| rows.iter().flatten().sum::<u64>() > 0)
            .prop_map(|rows| ContingencyTable::from_counts(rows).unwrap())
    }

    proptest! {
        #[test]
        fn transpose_duality(t in table()) {
            let s = homogeneity_completeness_v(&t).unwrap();
            let u = homogeneity_completeness_v(&t.transpose()).unwrap();
            prop_assert!((s.homogeneity - u.completeness).abs() < 1e-12);
            prop_assert!((s.v_measure - u.v_measure).abs() < 1e-12);
            let links: u64 = sankey_links(&t).iter().map(|l| l.count).sum();
            prop_assert_eq!(links, t.total());
        }

        #[test]
        fn row_permutation_invariant(t in table()) {
            let mut rev = t.clone();
            rev.counts.reverse();
            let a = homogeneity_completeness_v(&t).unwrap();
            let b = homogeneity_completeness_v(&rev).unwrap();
            prop_assert!((a.v_measure - b.v_measure).abs() < 1e-12);
        }
    }
}
