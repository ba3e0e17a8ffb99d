//! Single stages run outside a full pipeline, reading the artifacts an
//! earlier stage wrote. Each writes into `out_dir` and returns the hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::artifacts::ArtifactWriter;
use super::{
    cluster, featurize, ingest, process_csv_bytes, read, write_model, write_phase, write_selection,
    write_stats, write_tactics, Artifact, ClusterConfig, HmmConfig, PipelineConfig, HMM_STREAM,
    KMEANS_STREAM,
};
use crate::error::{Error, Result};
use crate::hmm::{
    fit_encoded, select_state_count_encoded, viterbi_encoded, Alphabet, CategoricalHmm,
};
use crate::preprocess::preprocess_cohort;
use crate::seed::derive_seed;
use crate::stats::StatsOptions;
use crate::trace::{read_process_csv, ProcessSequence};

fn writer(out_dir: &Path) -> Result<ArtifactWriter> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(ArtifactWriter::new(out_dir))
}

fn read_cohort(path: &Path) -> Result<Vec<ProcessSequence>> {
    let seqs = read_process_csv(read(path)?.as_slice(), &path.display().to_string())?;
    if seqs.is_empty() {
        return Err(Error::validation(
            "input",
            format!("{}: no learners found", path.display()),
        ));
    }
    Ok(seqs)
}

/// Ingest and preprocess per `cfg.input` / `cfg.preprocess`.
pub fn ingest_stage(cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<Artifact>> {
    let mut out = writer(out_dir)?;
    let raw = ingest(&cfg.input)?;
    out.bytes("ingested_processes.csv", &process_csv_bytes(&raw)?)?;
    let (kept, report) = preprocess_cohort(raw, &cfg.preprocess)?;
    out.json("filter_report.json", &report)?;
    out.bytes("cohort.csv", &process_csv_bytes(&kept)?)?;
    Ok(out.take())
}

/// Select a state count (unless `hmm.n_states` pins one) and fit the model.
/// `seed` is the run seed; the same stream as a full run is derived from it.
pub fn fit_hmm_stage(
    cohort: &Path,
    hmm: &HmmConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<Artifact>> {
    hmm.validate()?;
    let seqs = read_cohort(cohort)?;
    let alphabet = Alphabet::process_codes();
    let obs = alphabet.encode_all(&seqs)?;
    let opts = hmm.fit_options();
    let seed = derive_seed(seed, &[HMM_STREAM]);
    let mut out = writer(out_dir)?;
    let fit = match hmm.n_states {
        Some(n) => fit_encoded(&obs, &alphabet, n, seed, &opts)?,
        None => {
            let mut sel = select_state_count_encoded(
                &obs,
                &alphabet,
                hmm.min_states..=hmm.max_states,
                hmm.criterion,
                seed,
                &opts,
            )?;
            write_selection(&mut out, &sel)?;
            sel.fits
                .remove(&sel.report.selected)
                .expect("selected fit is kept")
        }
    };
    write_model(&mut out, &fit)?;
    Ok(out.take())
}

/// Viterbi-decode every learner in `cohort` under the model in `model_json`.
pub fn decode_stage(model_json: &Path, cohort: &Path, out_dir: &Path) -> Result<Vec<Artifact>> {
    let model: CategoricalHmm = serde_json::from_slice(&read(model_json)?)?;
    let seqs = read_cohort(cohort)?;
    let obs = model.alphabet().encode_all(&seqs)?;
    let paths = seqs
        .iter()
        .zip(&obs)
        .map(|(s, o)| viterbi_encoded(&model, &s.learner_id, o))
        .collect::<Result<Vec<_>>>()?;
    let mut out = writer(out_dir)?;
    write_tactics(&mut out, &paths)?;
    Ok(out.take())
}

pub struct SymbolSequences {
    pub ids: Vec<String>,
    pub sequences: Vec<Vec<usize>>,
    /// Names of the symbol indices.
    pub symbols: Vec<String>,
}

/// Sequences from either `tactics.csv` (`T1..TN`) or a process-code CSV.
pub fn read_symbol_sequences(path: &Path) -> Result<SymbolSequences> {
    let bytes = read(path)?;
    let source = path.display().to_string();
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let third = rdr.headers()?.get(2).unwrap_or("").to_string();
    if third == "process_code" {
        let seqs = read_cohort(path)?;
        let alphabet = Alphabet::process_codes();
        let obs = alphabet.encode_all(&seqs)?;
        let ids = seqs.into_iter().map(|s| s.learner_id).collect();
        return Ok(SymbolSequences {
            ids,
            sequences: obs,
            symbols: alphabet.symbols().to_vec(),
        });
    }
    if third != "tactic" {
        return Err(Error::validation(
            "sequences",
            format!("{source}: expected a process_code or tactic column, found {third:?}"),
        ));
    }
    let mut groups: BTreeMap<String, Vec<(u64, usize)>> = BTreeMap::new();
    let mut n_symbols = 0;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::Ingest {
            path: source.clone(),
            line,
            message: msg,
        };
        let idx: u64 = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad("bad seq_index".into()))?;
        let tactic = row.get(2).unwrap_or("");
        let k: usize = tactic
            .strip_prefix('T')
            .and_then(|d| d.parse().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| bad(format!("tactic {tactic:?} is not of the form T<k>")))?;
        n_symbols = n_symbols.max(k);
        groups
            .entry(row.get(0).unwrap_or("").to_string())
            .or_default()
            .push((idx, k - 1));
    }
    if groups.is_empty() {
        return Err(Error::validation(
            "sequences",
            format!("{source}: no learners found"),
        ));
    }
    let mut ids = Vec::new();
    let mut seqs = Vec::new();
    for (id, mut rows) in groups {
        rows.sort_by_key(|r| r.0);
        ids.push(id);
        seqs.push(rows.into_iter().map(|r| r.1).collect());
    }
    Ok(SymbolSequences {
        ids,
        sequences: seqs,
        symbols: (1..=n_symbols).map(|k| format!("T{k}")).collect(),
    })
}

/// Featurize, cluster and tabulate phase distributions for `sequences`.
pub fn cluster_stage(
    sequences: &Path,
    cfg: &ClusterConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<Artifact>> {
    cfg.validate()?;
    let SymbolSequences {
        ids,
        sequences: seqs,
        symbols,
    } = read_symbol_sequences(sequences)?;
    let mut out = writer(out_dir)?;
    let (dist, x) = featurize(cfg, seed, &ids, &seqs, &mut out)?;
    let a = cluster(
        cfg,
        derive_seed(seed, &[KMEANS_STREAM]),
        &dist,
        &x,
        &mut out,
    )?;
    let labels: BTreeMap<String, usize> = a
        .ids
        .iter()
        .cloned()
        .zip(a.labels.iter().copied())
        .collect();
    let named: Vec<(String, Vec<usize>)> = ids.into_iter().zip(seqs).collect();
    write_phase(&mut out, &named, &labels, &symbols, cfg.bins)?;
    Ok(out.take())
}

/// Read `learner_id,cluster` labels as written by the cluster stage.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, usize>> {
    let bytes = read(path)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut labels = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let k = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Ingest {
                path: path.display().to_string(),
                line,
                message: "cluster is not a nonnegative integer".into(),
            })?;
        labels.insert(row.get(0).unwrap_or("").to_string(), k);
    }
    Ok(labels)
}

/// Group comparison of `scores` across the clusters in `labels_csv`.
pub fn stats_stage(
    labels_csv: &Path,
    scores: &Path,
    opts: &StatsOptions,
    out_dir: &Path,
) -> Result<Vec<Artifact>> {
    opts.validate()?;
    let labels = read_labels(labels_csv)?;
    let mut out = writer(out_dir)?;
    write_stats(&mut out, Some(scores), &labels, opts)?;
    Ok(out.take())
}
