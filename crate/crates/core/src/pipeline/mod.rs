//! End-to-end runs: ingest → preprocess → [HMM selection, fit, decode] →
//! featurize → cluster → phase summaries → score statistics, with every
//! stage's outputs hashed into `manifest.json`.
//!
//! The benchmark path skips the three HMM stages and clusters process
//! sequences directly; everything downstream is the same code.

mod artifacts;
mod compare;
mod config;
mod stages;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{
    elbow_scan, kmeans, phase_distribution, rbf_features, rbf_features_with_landmarks,
    silhouette_from_distances, ClusterAssignment, DistanceMatrix, FeatureMatrix,
};
use crate::error::{Error, Result};
use crate::hmm::{
    fit_encoded, select_state_count_encoded, viterbi_encoded, Alphabet, FitResult, ModelSelection,
    TacticSequence,
};
use crate::preprocess::preprocess_cohort;
use crate::seed::derive_seed;
use crate::stats::{group_summary, read_scores_csv, StatsOptions};
use crate::trace::{
    code_cohort, code_processes, read_action_csv, read_process_csv, read_trace_csv,
    write_process_csv, ActionLibrary, ProcessLibrary, ProcessSequence,
};

pub use artifacts::{num, sha256_hex, Artifact};
pub use compare::{compare_runs, ComparisonReport, Subgroup};
pub use config::{
    ClusterConfig, HmmConfig, InputConfig, InputMode, OutputConfig, PipelineConfig, SilhouetteSpace,
};
pub use stages::{
    cluster_stage, decode_stage, fit_hmm_stage, ingest_stage, read_labels, read_symbol_sequences,
    stats_stage, SymbolSequences,
};

use artifacts::ArtifactWriter;

pub const RED_STAGES: [&str; 9] = [
    "ingest",
    "preprocess",
    "hmm_select",
    "hmm_fit",
    "decode",
    "featurize",
    "cluster",
    "phase_distribution",
    "stats",
];
pub const BENCHMARK_STAGES: [&str; 6] = [
    "ingest",
    "preprocess",
    "featurize",
    "cluster",
    "phase_distribution",
    "stats",
];

/// Seed streams handed to the randomized stages.
const HMM_STREAM: u64 = 1;
const KMEANS_STREAM: u64 = 2;
const LANDMARK_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Hash over the stage's artifact hashes, in write order.
    pub sha256: String,
    pub artifacts: Vec<Artifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub benchmark_mode: bool,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub stages: Vec<StageRecord>,
    #[serde(skip)]
    pub run_dir: PathBuf,
}

impl RunManifest {
    pub fn artifact_names(&self) -> Vec<&str> {
        self.stages
            .iter()
            .flat_map(|s| s.artifacts.iter().map(|a| a.file.as_str()))
            .collect()
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let p = run_dir.join("manifest.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut m: Self = serde_json::from_str(&text)?;
        m.run_dir = run_dir.to_path_buf();
        Ok(m)
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(
        || p.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn read(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| Error::io(p, e))
}

/// Content address: the config with paths reduced to file names, plus the
/// bytes of every input.
fn run_identity(cfg: &PipelineConfig) -> Result<(String, Vec<Artifact>)> {
    let mut inputs = vec![];
    let mut keyed = cfg.clone();
    keyed.output = OutputConfig::default();
    let mut paths = vec![&mut keyed.input.path];
    paths.extend(
        [
            &mut keyed.input.scores,
            &mut keyed.input.action_library,
            &mut keyed.input.process_library,
        ]
        .into_iter()
        .flatten(),
    );
    for p in paths {
        inputs.push(Artifact {
            file: file_name(p),
            sha256: sha256_hex(&read(p)?),
        });
        *p = PathBuf::from(file_name(p));
    }
    let mut key = serde_json::to_vec(&keyed)?;
    for a in &inputs {
        key.extend_from_slice(a.sha256.as_bytes());
    }
    Ok((sha256_hex(&key)[..16].to_string(), inputs))
}

struct Runner {
    out: ArtifactWriter,
    stages: Vec<StageRecord>,
    timings: bool,
    dir: PathBuf,
}

impl Runner {
    fn stage<T>(
        &mut self,
        name: &str,
        seed: Option<u64>,
        f: impl FnOnce(&mut ArtifactWriter) -> Result<T>,
    ) -> Result<T> {
        log::info!("stage {name}");
        let start = Instant::now();
        let result = f(&mut self.out).map_err(|e| e.in_stage(name));
        let value = match result {
            Ok(v) => v,
            Err(e) => {
                let _ = fs::write(
                    self.dir.join("STALE"),
                    format!("stage {name} failed: {e}\n"),
                );
                return Err(e);
            }
        };
        let artifacts = self.out.take();
        let joined: String = artifacts.iter().map(|a| a.sha256.as_str()).collect();
        self.stages.push(StageRecord {
            name: name.to_string(),
            seed,
            sha256: sha256_hex(joined.as_bytes()),
            artifacts,
            seconds: self.timings.then(|| start.elapsed().as_secs_f64()),
        });
        Ok(value)
    }
}

fn ingest(cfg: &InputConfig) -> Result<Vec<ProcessSequence>> {
    let bytes = read(&cfg.path)?;
    let source = cfg.path.display().to_string();
    let processes = || -> Result<ProcessLibrary> {
        cfg.process_library.as_ref().map_or_else(
            || Ok(ProcessLibrary::default_library()),
            ProcessLibrary::from_path,
        )
    };
    match cfg.mode {
        InputMode::Processes => read_process_csv(bytes.as_slice(), &source),
        InputMode::Actions => {
            let lib = processes()?;
            Ok(read_action_csv(bytes.as_slice(), &source)?
                .iter()
                .map(|a| code_processes(a, &lib))
                .collect())
        }
        InputMode::Events => {
            let actions = cfg.action_library.as_ref().map_or_else(
                || Ok(ActionLibrary::default_library()),
                ActionLibrary::from_path,
            )?;
            let records = read_trace_csv(bytes.as_slice(), &source)?;
            Ok(code_cohort(&records, &actions, &processes()?))
        }
    }
}

fn process_csv_bytes(seqs: &[ProcessSequence]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_process_csv(&mut buf, seqs)?;
    Ok(buf)
}

fn matrix_rows<'a>(
    labels: &'a [String],
    rows: impl Iterator<Item = &'a [f64]> + 'a,
) -> impl Iterator<Item = Vec<String>> + 'a {
    labels.iter().zip(rows).map(|(l, r)| {
        std::iter::once(l.clone())
            .chain(r.iter().map(|&v| num(v)))
            .collect()
    })
}

fn write_model(out: &mut ArtifactWriter, fit: &FitResult) -> Result<()> {
    let model = &fit.model;
    let states: Vec<String> = (0..model.n_states())
        .map(|i| format!("T{}", i + 1))
        .collect();
    out.json("model.json", model)?;
    let mut header = vec!["state"];
    header.extend(model.alphabet().symbols().iter().map(String::as_str));
    out.csv(
        "emission_matrix.csv",
        &header,
        matrix_rows(&states, model.emission_rows()),
    )?;
    let mut header = vec!["from"];
    header.extend(states.iter().map(String::as_str));
    out.csv(
        "transition_matrix.csv",
        &header,
        matrix_rows(&states, model.transition_rows()),
    )?;
    out.csv(
        "initial_distribution.csv",
        &["state", "probability"],
        states
            .iter()
            .zip(model.initial())
            .map(|(s, &p)| [s.clone(), num(p)]),
    )?;
    out.json("fit_summary.json", fit)
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    k: usize,
    chosen_by: &'a str,
    suggested_k: usize,
    knee_k: Option<usize>,
    inertia: f64,
    silhouette: Option<f64>,
    silhouette_space: SilhouetteSpace,
    cluster_sizes: Vec<usize>,
    converged: bool,
    n_iterations: usize,
}

/// Distances → features → elbow scan → final assignment.
fn featurize(
    cfg: &ClusterConfig,
    seed: u64,
    ids: &[String],
    seqs: &[Vec<usize>],
    out: &mut ArtifactWriter,
) -> Result<(DistanceMatrix, FeatureMatrix)> {
    let dist = DistanceMatrix::from_sequences(ids.to_vec(), seqs, cfg.normalize);
    let x = match cfg.landmarks {
        Some(r) => {
            rbf_features_with_landmarks(&dist, cfg.gamma, r, derive_seed(seed, &[LANDMARK_STREAM]))?
        }
        None => rbf_features(&dist, cfg.gamma)?,
    };
    let mut header = vec!["learner_id"];
    header.extend(ids.iter().map(String::as_str));
    out.csv(
        "distances.csv",
        &header,
        matrix_rows(ids, (0..dist.len()).map(|i| dist.row(i))),
    )?;
    let mut header = vec!["learner_id"];
    header.extend(x.references.iter().map(|&r| ids[r].as_str()));
    out.csv(
        "features.csv",
        &header,
        matrix_rows(ids, (0..x.n_rows()).map(|i| x.row(i))),
    )?;
    out.json(
        "featurize.json",
        &serde_json::json!({
            "gamma": x.gamma,
            "n_references": x.dim(),
            "normalized_distances": cfg.normalize,
            "warnings": x.warnings,
        }),
    )?;
    Ok((dist, x))
}

fn cluster(
    cfg: &ClusterConfig,
    seed: u64,
    dist: &DistanceMatrix,
    x: &FeatureMatrix,
    out: &mut ArtifactWriter,
) -> Result<ClusterAssignment> {
    let n = x.n_rows();
    if n < cfg.k_min {
        return Err(Error::InvalidArgument(format!(
            "{n} learners cannot form {} clusters",
            cfg.k_min
        )));
    }
    let hi = cfg.k_max.min(n);
    let (mut table, mut fits) = elbow_scan(x, cfg.k_min..=hi, seed, &cfg.kmeans)?;
    if cfg.silhouette_space == SilhouetteSpace::Distances {
        for (row, fit) in table.rows.iter_mut().zip(fits.iter_mut()) {
            let s = silhouette_from_distances(dist, &fit.labels)?;
            row.silhouette = Some(s);
            fit.silhouette = Some(s);
        }
        table.suggested_k = table
            .rows
            .iter()
            .fold((table.rows[0].k, f64::NEG_INFINITY), |best, r| {
                let s = r.silhouette.unwrap_or(f64::NEG_INFINITY);
                if s > best.1 {
                    (r.k, s)
                } else {
                    best
                }
            })
            .0;
    }
    out.csv(
        "elbow.csv",
        &["k", "inertia", "silhouette"],
        table.rows.iter().map(|r| {
            [
                r.k.to_string(),
                num(r.inertia),
                r.silhouette.map_or(String::new(), num),
            ]
        }),
    )?;
    out.bytes("elbow.svg", svg::elbow(&table).as_bytes())?;
    let (k, chosen_by) = match cfg.k {
        Some(k) => (k, "config"),
        None => (table.suggested_k, "max_silhouette"),
    };
    let assignment = if (cfg.k_min..=hi).contains(&k) {
        fits.swap_remove(k - cfg.k_min)
    } else {
        let mut a = kmeans(x, k, seed, &cfg.kmeans)?;
        if cfg.silhouette_space == SilhouetteSpace::Distances {
            a.silhouette = Some(silhouette_from_distances(dist, &a.labels)?);
        }
        a
    };
    out.csv(
        "labels.csv",
        &["learner_id", "cluster"],
        assignment
            .ids
            .iter()
            .zip(&assignment.labels)
            .map(|(id, l)| [id.clone(), l.to_string()]),
    )?;
    out.json(
        "clusters.json",
        &ClusterSummary {
            k,
            chosen_by,
            suggested_k: table.suggested_k,
            knee_k: table.knee_k,
            inertia: assignment.inertia,
            silhouette: assignment.silhouette,
            silhouette_space: cfg.silhouette_space,
            cluster_sizes: assignment.cluster_sizes(),
            converged: assignment.converged,
            n_iterations: assignment.n_iterations,
        },
    )?;
    Ok(assignment)
}

fn write_selection(out: &mut ArtifactWriter, sel: &ModelSelection) -> Result<()> {
    out.csv(
        "model_selection.csv",
        &[
            "n_states",
            "log_likelihood",
            "aic",
            "bic",
            "n_parameters",
            "n_observations",
        ],
        sel.report.candidates.iter().map(|c| {
            [
                c.n_states.to_string(),
                c.log_likelihood.map_or(String::new(), num),
                c.aic.map_or(String::new(), num),
                c.bic.map_or(String::new(), num),
                c.n_parameters.to_string(),
                c.n_observations.to_string(),
            ]
        }),
    )?;
    out.json("model_selection.json", &sel.report)?;
    Ok(())
}

fn write_tactics(out: &mut ArtifactWriter, paths: &[TacticSequence]) -> Result<()> {
    out.csv(
        "tactics.csv",
        &["learner_id", "seq_index", "tactic"],
        paths.iter().flat_map(|p| {
            p.states
                .iter()
                .enumerate()
                .map(|(t, s)| [p.learner_id.clone(), t.to_string(), format!("T{}", s + 1)])
        }),
    )?;
    Ok(())
}

fn write_phase(
    out: &mut ArtifactWriter,
    named: &[(String, Vec<usize>)],
    labels: &BTreeMap<String, usize>,
    symbols: &[String],
    bins: usize,
) -> Result<()> {
    let pd = phase_distribution(named, labels, symbols.len(), bins)?;
    out.csv(
        "phase_distribution.csv",
        &["cluster", "bin", "n_learners", "symbol", "proportion"],
        pd.cells.iter().flat_map(|c| {
            symbols.iter().zip(&c.proportions).map(move |(s, &p)| {
                [
                    c.cluster.to_string(),
                    c.bin.to_string(),
                    c.n_learners.to_string(),
                    s.clone(),
                    num(p),
                ]
            })
        }),
    )?;
    out.csv(
        "tactic_proportions.csv",
        &["cluster", "n_learners", "symbol", "proportion"],
        pd.whole_task.iter().flat_map(|c| {
            symbols.iter().zip(&c.proportions).map(move |(s, &p)| {
                [
                    c.cluster.to_string(),
                    c.n_learners.to_string(),
                    s.clone(),
                    num(p),
                ]
            })
        }),
    )?;
    out.bytes(
        "phase_distribution.svg",
        svg::phase(&pd, symbols).as_bytes(),
    )
}

fn write_stats(
    out: &mut ArtifactWriter,
    scores: Option<&Path>,
    labels: &BTreeMap<String, usize>,
    options: &StatsOptions,
) -> Result<()> {
    let Some(path) = scores else {
        return out.json(
            "group_stats.json",
            &serde_json::json!({"skipped": "no scores input configured"}),
        );
    };
    let scores = read_scores_csv(read(path)?.as_slice(), &path.display().to_string())?;
    let g = group_summary(&scores, labels, options)?;
    out.json("group_stats.json", &g)?;
    let stats: BTreeMap<usize, (f64, f64)> = g
        .groups
        .iter()
        .map(|s| (s.cluster, (s.mean, s.sd)))
        .collect();
    out.csv(
        "group_stats.csv",
        &[
            "cluster_a",
            "cluster_b",
            "n_a",
            "n_b",
            "mean_a",
            "sd_a",
            "mean_b",
            "sd_b",
            "u",
            "u_b",
            "u_min",
            "z",
            "p",
            "exact",
            "r",
            "r_z",
            "p_holm",
            "significant",
        ],
        g.pairs.iter().map(|p| {
            vec![
                p.cluster_a.to_string(),
                p.cluster_b.to_string(),
                p.n_a.to_string(),
                p.n_b.to_string(),
                num(stats[&p.cluster_a].0),
                num(stats[&p.cluster_a].1),
                num(stats[&p.cluster_b].0),
                num(stats[&p.cluster_b].1),
                num(p.u),
                num(p.u_b),
                num(p.u_min),
                num(p.z),
                num(p.p),
                p.exact.to_string(),
                num(p.r),
                num(p.r_z),
                num(p.p_holm),
                p.significant.to_string(),
            ]
        }),
    )
}

/// Run every stage for `cfg` into `<output.dir>/<run id>`. Outputs of a
/// failed run stay on disk next to a `STALE` marker naming the stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let (run_id, inputs) = run_identity(cfg)?;
    let dir = cfg.output.dir.join(&run_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let _ = fs::remove_file(dir.join("manifest.json"));
    fs::write(dir.join("STALE"), "run in progress\n")
        .map_err(|e| Error::io(dir.join("STALE"), e))?;
    let mut r = Runner {
        out: ArtifactWriter::new(&dir),
        stages: Vec::new(),
        timings: cfg.output.record_timings,
        dir: dir.clone(),
    };
    let mut resolved = serde_json::to_string_pretty(cfg)?;
    resolved.push('\n');
    fs::write(dir.join("config.resolved.json"), resolved).map_err(|e| Error::io(&dir, e))?;

    let raw = r.stage("ingest", None, |out| {
        let seqs = ingest(&cfg.input)?;
        if seqs.is_empty() {
            return Err(Error::validation("input", "no learners found"));
        }
        out.bytes("ingested_processes.csv", &process_csv_bytes(&seqs)?)?;
        Ok(seqs)
    })?;

    let cohort = r.stage("preprocess", None, |out| {
        let (kept, report) = preprocess_cohort(raw, &cfg.preprocess)?;
        out.json("filter_report.json", &report)?;
        out.bytes("cohort.csv", &process_csv_bytes(&kept)?)?;
        if kept.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "{} learners left after preprocessing",
                kept.len()
            )));
        }
        Ok(kept)
    })?;
    let ids: Vec<String> = cohort.iter().map(|s| s.learner_id.clone()).collect();
    let process_alphabet = Alphabet::process_codes();
    let obs = process_alphabet.encode_all(&cohort)?;

    let (seqs, symbols): (Vec<Vec<usize>>, Vec<String>) = if cfg.benchmark_mode {
        (obs, process_alphabet.symbols().to_vec())
    } else {
        let hmm_seed = derive_seed(cfg.seed, &[HMM_STREAM]);
        let opts = cfg.hmm.fit_options();
        let selection = r.stage("hmm_select", Some(hmm_seed), |out| {
            let sel = select_state_count_encoded(
                &obs,
                &process_alphabet,
                cfg.hmm.min_states..=cfg.hmm.max_states,
                cfg.hmm.criterion,
                hmm_seed,
                &opts,
            )?;
            write_selection(out, &sel)?;
            Ok(sel)
        })?;
        let fit = r.stage("hmm_fit", Some(hmm_seed), |out| {
            let n = cfg.hmm.n_states.unwrap_or(selection.report.selected);
            let fit = match selection.fits.get(&n) {
                Some(f) => f.clone(),
                None => fit_encoded(&obs, &process_alphabet, n, hmm_seed, &opts)?,
            };
            write_model(out, &fit)?;
            Ok(fit)
        })?;
        let paths = r.stage("decode", None, |out| {
            let paths = ids
                .iter()
                .zip(&obs)
                .map(|(id, o)| viterbi_encoded(&fit.model, id, o))
                .collect::<Result<Vec<_>>>()?;
            write_tactics(out, &paths)?;
            Ok(paths)
        })?;
        let names = (0..fit.model.n_states())
            .map(|i| format!("T{}", i + 1))
            .collect();
        (paths.into_iter().map(|p| p.states).collect(), names)
    };

    let (dist, x) = r.stage("featurize", None, |out| {
        featurize(&cfg.cluster, cfg.seed, &ids, &seqs, out)
    })?;
    let km_seed = derive_seed(cfg.seed, &[KMEANS_STREAM]);
    let assignment = r.stage("cluster", Some(km_seed), |out| {
        cluster(&cfg.cluster, km_seed, &dist, &x, out)
    })?;
    let labels: BTreeMap<String, usize> = assignment
        .ids
        .iter()
        .cloned()
        .zip(assignment.labels.iter().copied())
        .collect();

    r.stage("phase_distribution", None, |out| {
        let named: Vec<(String, Vec<usize>)> =
            ids.iter().cloned().zip(seqs.iter().cloned()).collect();
        write_phase(out, &named, &labels, &symbols, cfg.cluster.bins)
    })?;

    r.stage("stats", None, |out| {
        write_stats(out, cfg.input.scores.as_deref(), &labels, &cfg.stats)
    })?;

    let manifest = RunManifest {
        run_id,
        benchmark_mode: cfg.benchmark_mode,
        seed: cfg.seed,
        inputs,
        stages: r.stages,
        run_dir: dir.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text).map_err(|e| Error::io(&dir, e))?;
    let _ = fs::remove_file(dir.join("STALE"));
    Ok(manifest)
}
