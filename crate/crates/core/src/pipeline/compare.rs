use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agreement::{
    contingency, homogeneity_completeness_v, sankey_graph, AgreementScores, ContingencyTable,
};
use crate::error::{Error, Result};
use crate::stats::read_scores_csv;
use crate::trace::read_process_csv;

use super::artifacts::{num, ArtifactWriter};
use super::{svg, PipelineConfig, RunManifest};

/// Learners sharing a cell of the contingency table whose column cluster
/// is split across several row clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub learners: Vec<String>,
    pub mean_score: Option<f64>,
    pub sd_score: Option<f64>,
    /// Symbol share over all positions of all members (rows sum to 1).
    pub tactic_distribution: Option<BTreeMap<String, f64>>,
    pub process_distribution: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: String,
    pub run_b: String,
    pub n_learners: u64,
    pub scores: AgreementScores,
    pub table: ContingencyTable,
    pub drilldown: Vec<Subgroup>,
}

fn read_labels(run: &Path) -> Result<BTreeMap<String, usize>> {
    let p = run.join("labels.csv");
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let l = row[1]
            .parse()
            .map_err(|_| Error::validation("labels.csv", format!("bad cluster {:?}", &row[1])))?;
        out.insert(row[0].to_string(), l);
    }
    Ok(out)
}

/// `learner_id,seq_index,<symbol>` exports, symbols kept as text.
fn read_symbol_csv(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        out.entry(row[0].to_string())
            .or_default()
            .push(row[2].to_string());
    }
    Ok(out)
}

fn distribution<'a>(seqs: impl Iterator<Item = &'a Vec<String>>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for s in seqs.flatten() {
        *counts.entry(s.clone()).or_default() += 1.0;
        total += 1.0;
    }
    counts.values_mut().for_each(|c| *c /= total);
    counts
}

fn scores_of(run: &Path) -> Result<Option<BTreeMap<String, f64>>> {
    let p = run.join("config.resolved.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let cfg = PipelineConfig::from_json(&text)?;
    match cfg.input.scores {
        Some(s) => {
            let bytes = fs::read(&s).map_err(|e| Error::io(&s, e))?;
            Ok(Some(read_scores_csv(
                bytes.as_slice(),
                &s.display().to_string(),
            )?))
        }
        None => Ok(None),
    }
}

/// Contingency (rows = `run_a`), agreement scores, Sankey data and a
/// drill-down of every split column cluster, written into `out_dir`.
pub fn compare_runs(run_a: &Path, run_b: &Path, out_dir: &Path) -> Result<ComparisonReport> {
    let (ma, mb) = (RunManifest::load(run_a)?, RunManifest::load(run_b)?);
    let (la, lb) = (read_labels(run_a)?, read_labels(run_b)?);
    let table = contingency(&la, &lb)?;
    let scores = homogeneity_completeness_v(&table)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = ArtifactWriter::new(out_dir);

    let mut header = vec!["cluster_a".to_string()];
    header.extend(table.col_labels.iter().map(|c| format!("b{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "contingency.csv",
        &header,
        table.counts.iter().zip(&table.row_labels).map(|(row, l)| {
            std::iter::once(format!("a{l}"))
                .chain(row.iter().map(u64::to_string))
                .collect::<Vec<_>>()
        }),
    )?;
    let (side_a, side_b) = (
        if ma.benchmark_mode {
            "benchmark"
        } else {
            "tactic"
        },
        if mb.benchmark_mode {
            "benchmark"
        } else {
            "tactic"
        },
    );
    out.json("sankey.json", &sankey_graph(&table, side_a, side_b))?;
    out.bytes("sankey.svg", svg::sankey(&table, side_a, side_b).as_bytes())?;

    // Drill-down: tactic paths come from whichever run decoded them.
    let tactic_run = [run_a, run_b]
        .into_iter()
        .find(|r| r.join("tactics.csv").is_file());
    let tactics = tactic_run
        .map(|r| read_symbol_csv(&r.join("tactics.csv")))
        .transpose()?;
    let cohort_path = run_a.join("cohort.csv");
    let cohort_bytes = fs::read(&cohort_path).map_err(|e| Error::io(&cohort_path, e))?;
    let processes: BTreeMap<String, Vec<String>> =
        read_process_csv(cohort_bytes.as_slice(), "cohort.csv")?
            .into_iter()
            .map(|s| {
                (
                    s.learner_id,
                    s.codes.iter().map(|c| c.as_str().to_string()).collect(),
                )
            })
            .collect();
    let learner_scores = scores_of(run_a)?;
    let mut drilldown = Vec::new();
    for (j, &cb) in table.col_labels.iter().enumerate() {
        if table.counts.iter().filter(|r| r[j] > 0).count() < 2 {
            continue;
        }
        for (i, &ca) in table.row_labels.iter().enumerate() {
            if table.counts[i][j] == 0 {
                continue;
            }
            let learners: Vec<String> = la
                .iter()
                .filter(|(id, &l)| l == ca && lb[*id] == cb)
                .map(|(id, _)| id.clone())
                .collect();
            let member_scores: Vec<f64> = learner_scores
                .as_ref()
                .map(|s| {
                    learners
                        .iter()
                        .filter_map(|id| s.get(id).copied())
                        .collect()
                })
                .unwrap_or_default();
            let (mean_score, sd_score) = if member_scores.is_empty() {
                (None, None)
            } else {
                let n = member_scores.len() as f64;
                let m = member_scores.iter().sum::<f64>() / n;
                let sd = if member_scores.len() > 1 {
                    (member_scores.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
                        .sqrt()
                } else {
                    0.0
                };
                (Some(m), Some(sd))
            };
            drilldown.push(Subgroup {
                cluster_a: ca,
                cluster_b: cb,
                tactic_distribution: tactics
                    .as_ref()
                    .map(|t| distribution(learners.iter().filter_map(|id| t.get(id)))),
                process_distribution: distribution(
                    learners.iter().filter_map(|id| processes.get(id)),
                ),
                learners,
                mean_score,
                sd_score,
            });
        }
    }
    out.csv(
        "drilldown.csv",
        &[
            "cluster_b",
            "cluster_a",
            "n",
            "kind",
            "symbol",
            "proportion",
        ],
        drilldown.iter().flat_map(|g| {
            let n = g.learners.len().to_string();
            let tactic = g
                .tactic_distribution
                .iter()
                .flatten()
                .map(|(s, p)| ("tactic", s, *p));
            let process = g
                .process_distribution
                .iter()
                .map(|(s, p)| ("process", s, *p));
            tactic
                .chain(process)
                .map(|(kind, s, p)| {
                    [
                        g.cluster_b.to_string(),
                        g.cluster_a.to_string(),
                        n.clone(),
                        kind.to_string(),
                        s.clone(),
                        num(p),
                    ]
                })
                .collect::<Vec<_>>()
        }),
    )?;
    let report = ComparisonReport {
        run_a: ma.run_id,
        run_b: mb.run_id,
        n_learners: table.total(),
        scores,
        table,
        drilldown,
    };
    out.json(
        "agreement.json",
        &serde_json::json!({
            "run_a": report.run_a,
            "run_b": report.run_b,
            "rows": side_a,
            "columns": side_b,
            "n_learners": report.n_learners,
            "homogeneity": report.scores.homogeneity,
            "completeness": report.scores.completeness,
            "v_measure": report.scores.v_measure,
        }),
    )?;
    out.json("drilldown.json", &report.drilldown)?;
    Ok(report)
}
