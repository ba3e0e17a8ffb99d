//! Synthetic cohorts with known tactics, strategies and scores, plus the
//! state-alignment helpers needed to compare fitted models with the truth.

use std::fs;
use std::path::Path;

use itertools::Itertools;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{Alphabet, CategoricalHmm};
use crate::seed::rng_for;
use crate::trace::{write_process_csv, write_trace_csv, ProcessCode, ProcessSequence, TraceRecord};

const PAPERLIKE: &str = include_str!("../assets/paperlike.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreShape {
    /// Normal, redrawn until nonnegative.
    #[default]
    Gaussian,
    /// Log-normal with the given mean and sd.
    RightSkewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub shape: ScoreShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetype {
    pub name: String,
    pub weight: f64,
    pub hmm: CategoricalHmm,
    pub score: ScoreModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_learners: usize,
    pub seed: u64,
    /// Sequence lengths are uniform on `[min, max]`.
    pub length: LengthRange,
    pub archetypes: Vec<Archetype>,
    /// Share of extra unrecognizable events mixed into emitted traces.
    #[serde(default)]
    pub unrecognized_rate: f64,
}

impl CohortSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Three archetypes on a shared nine-tactic generator, loosely shaped
    /// like a reading/writing task with an optional chatbot.
    pub fn paperlike() -> Self {
        Self::from_json(PAPERLIKE).expect("bundled spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_learners == 0 {
            return Err(Error::validation("n_learners", "must be at least 1"));
        }
        if self.archetypes.is_empty() {
            return Err(Error::validation("archetypes", "need at least one"));
        }
        if self.length.min == 0 || self.length.min > self.length.max {
            return Err(Error::validation("length", "need 1 <= min <= max"));
        }
        if !(0.0..1.0).contains(&self.unrecognized_rate) {
            return Err(Error::validation("unrecognized_rate", "must lie in [0, 1)"));
        }
        let alphabet = self.archetypes[0].hmm.alphabet();
        let mut total = 0.0;
        for (i, a) in self.archetypes.iter().enumerate() {
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::validation(
                    format!("archetypes[{i}].weight"),
                    "must be nonnegative",
                ));
            }
            total += a.weight;
            if a.hmm.alphabet() != alphabet {
                return Err(Error::validation(
                    format!("archetypes[{i}].hmm"),
                    "all archetypes must share one alphabet",
                ));
            }
            if !(a.score.sd.is_finite() && a.score.sd >= 0.0 && a.score.mean.is_finite()) {
                return Err(Error::validation(
                    format!("archetypes[{i}].score"),
                    "mean must be finite and sd nonnegative",
                ));
            }
            if a.score.shape == ScoreShape::RightSkewed && a.score.mean <= 0.0 {
                return Err(Error::validation(
                    format!("archetypes[{i}].score"),
                    "right-skewed scores need a positive mean",
                ));
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "archetypes.weight",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        Ok(())
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.archetypes[0].hmm.alphabet()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLearner {
    pub learner_id: String,
    pub archetype: usize,
    pub symbols: Vec<usize>,
    /// Hidden path under the archetype's generator.
    pub states: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub learners: Vec<SyntheticLearner>,
}

fn draw_score<R: Rng>(m: &ScoreModel, rng: &mut R) -> f64 {
    if m.sd == 0.0 {
        return m.mean.max(0.0);
    }
    match m.shape {
        ScoreShape::Gaussian => {
            let d = Normal::new(m.mean, m.sd).expect("validated");
            for _ in 0..10_000 {
                let x = d.sample(rng);
                if x >= 0.0 {
                    return x;
                }
            }
            0.0
        }
        ScoreShape::RightSkewed => {
            let s2 = (1.0 + (m.sd / m.mean).powi(2)).ln();
            let d = LogNormal::new(m.mean.ln() - s2 / 2.0, s2.sqrt()).expect("validated");
            d.sample(rng)
        }
    }
}

/// Draw every learner from its own derived stream, so the cohort does not
/// depend on thread count or generation order.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Cohort> {
    spec.validate()?;
    let width = spec.n_learners.to_string().len().max(4);
    let weights: Vec<f64> = spec.archetypes.iter().map(|a| a.weight).collect();
    let learners = (0..spec.n_learners)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(spec.seed, &[i as u64]);
            let mut u = rng.random::<f64>();
            let mut archetype = weights.len() - 1;
            for (k, &w) in weights.iter().enumerate() {
                if u < w {
                    archetype = k;
                    break;
                }
                u -= w;
            }
            let a = &spec.archetypes[archetype];
            let len = rng.random_range(spec.length.min..=spec.length.max);
            let (symbols, states) = a.hmm.sample_with(len, &mut rng)?;
            let score = draw_score(&a.score, &mut rng);
            Ok(SyntheticLearner {
                learner_id: format!("L{i:0width$}"),
                archetype,
                symbols,
                states,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        spec: spec.clone(),
        learners,
    })
}

/// One event that the bundled libraries code back to exactly `code`.
fn canonical_event(code: ProcessCode, k: usize) -> (&'static str, String) {
    match code {
        ProcessCode::Mco => ("page_visit", "instruction".into()),
        ProcessCode::Mcp => ("click", "PLANNER".into()),
        ProcessCode::Mce => ("click", "WORD_COUNT".into()),
        ProcessCode::Mcm => ("click", "TIMER".into()),
        ProcessCode::Lcf => ("page_visit", format!("reading:relevant/p{}", k % 7)),
        ProcessCode::Lcr => ("page_visit", format!("reading:revisit/p{}", k % 7)),
        ProcessCode::Hceo => ("keystroke", "essay".into()),
        ProcessCode::Chatgpt => ("keystroke", "chatgpt prompt".into()),
        ProcessCode::NotRecognized | ProcessCode::Missing => ("idle", "idle".into()),
    }
}

impl Cohort {
    fn codes(&self) -> Result<Vec<ProcessCode>> {
        self.spec
            .alphabet()
            .symbols()
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()
            .map_err(|_| {
                Error::validation(
                    "archetypes.hmm.alphabet",
                    "symbols must be process codes to emit traces",
                )
            })
    }

    /// Clean process sequences (no unrecognized events).
    pub fn process_sequences(&self) -> Result<Vec<ProcessSequence>> {
        let codes = self.codes()?;
        Ok(self
            .learners
            .iter()
            .map(|l| {
                ProcessSequence::new(
                    l.learner_id.clone(),
                    l.symbols.iter().map(|&o| codes[o]).collect(),
                )
            })
            .collect())
    }

    pub fn labels(&self) -> std::collections::BTreeMap<String, usize> {
        self.learners
            .iter()
            .map(|l| (l.learner_id.clone(), l.archetype))
            .collect()
    }

    pub fn scores(&self) -> std::collections::BTreeMap<String, f64> {
        self.learners
            .iter()
            .map(|l| (l.learner_id.clone(), l.score))
            .collect()
    }

    /// Raw events plus the process sequences they code to (including any
    /// inserted `NOT_RECOGNIZED` entries).
    pub fn traces(&self) -> Result<(Vec<TraceRecord>, Vec<ProcessSequence>)> {
        let codes = self.codes()?;
        let mut records = Vec::new();
        let mut coded = Vec::new();
        for (i, l) in self.learners.iter().enumerate() {
            let mut rng = rng_for(self.spec.seed, &[i as u64, 0x7ace]);
            let mut ts: u64 = 1_700_000_000_000;
            let mut seq = Vec::with_capacity(l.symbols.len());
            let mut push = |code: ProcessCode, k: usize, ts: u64| {
                let (kind, detail) = canonical_event(code, k);
                records.push(TraceRecord {
                    learner_id: l.learner_id.clone(),
                    timestamp_ms: ts,
                    event_kind: kind.into(),
                    detail,
                });
            };
            for (k, &o) in l.symbols.iter().enumerate() {
                if self.spec.unrecognized_rate > 0.0
                    && rng.random::<f64>() < self.spec.unrecognized_rate
                {
                    ts += rng.random_range(200..3_000);
                    push(ProcessCode::NotRecognized, k, ts);
                    seq.push(ProcessCode::NotRecognized);
                }
                ts += rng.random_range(200..3_000);
                push(codes[o], k, ts);
                seq.push(codes[o]);
            }
            coded.push(ProcessSequence::new(l.learner_id.clone(), seq));
        }
        Ok((records, coded))
    }

    /// Write `traces.csv`, `processes.csv`, `scores.csv` and `ground_truth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        let (records, coded) = self.traces()?;
        write_trace_csv(create("traces.csv")?, &records)?;
        write_process_csv(create("processes.csv")?, &coded)?;
        let mut w = csv::Writer::from_writer(create("scores.csv")?);
        w.write_record(["learner_id", "score"])?;
        for l in &self.learners {
            w.write_record([l.learner_id.as_str(), &format!("{:.6}", l.score)])?;
        }
        w.flush()
            .map_err(|e| Error::io(dir.join("scores.csv"), e))?;
        let truth = GroundTruth {
            seed: self.spec.seed,
            archetypes: self
                .spec
                .archetypes
                .iter()
                .map(|a| a.name.clone())
                .collect(),
            learners: self
                .learners
                .iter()
                .map(|l| TruthRow {
                    learner_id: l.learner_id.clone(),
                    archetype: l.archetype,
                    states: l.states.clone(),
                    score: l.score,
                })
                .collect(),
        };
        let p = dir.join("ground_truth.json");
        serde_json::to_writer_pretty(create("ground_truth.json")?, &truth)?;
        fs::write(
            dir.join("cohort_spec.json"),
            serde_json::to_string_pretty(&self.spec)?,
        )
        .map_err(|e| Error::io(p, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub learner_id: String,
    pub archetype: usize,
    pub states: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub archetypes: Vec<String>,
    pub learners: Vec<TruthRow>,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn check_dims(truth: &CategoricalHmm, fitted: &CategoricalHmm) -> Result<()> {
    if truth.n_states() != fitted.n_states() || truth.alphabet() != fitted.alphabet() {
        return Err(Error::InvalidArgument(format!(
            "cannot align models with different state counts or alphabets ({} vs {} states)",
            truth.n_states(),
            fitted.n_states()
        )));
    }
    Ok(())
}

/// Permutation `perm` with fitted state `perm[k]` playing true state `k`,
/// minimizing the summed L1 distance between matched emission rows, and
/// that cost. Exhaustive for up to 8 states, greedy beyond.
pub fn align_states(truth: &CategoricalHmm, fitted: &CategoricalHmm) -> Result<(Vec<usize>, f64)> {
    check_dims(truth, fitted)?;
    let n = truth.n_states();
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            (0..n)
                .map(|j| l1(truth.emission_row(k), fitted.emission_row(j)))
                .collect()
        })
        .collect();
    if n <= 8 {
        let mut best = (f64::INFINITY, Vec::new());
        for perm in (0..n).permutations(n) {
            let c: f64 = perm.iter().enumerate().map(|(k, &j)| cost[k][j]).sum();
            if c < best.0 {
                best = (c, perm);
            }
        }
        return Ok((best.1, best.0));
    }
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut total = 0.0;
    for _ in 0..n {
        let mut pick = (f64::INFINITY, 0, 0);
        for k in (0..n).filter(|&k| perm[k] == usize::MAX) {
            for j in (0..n).filter(|&j| !used[j]) {
                if cost[k][j] < pick.0 {
                    pick = (cost[k][j], k, j);
                }
            }
        }
        perm[pick.1] = pick.2;
        used[pick.2] = true;
        total += pick.0;
    }
    Ok((perm, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryError {
    pub emission_max_row_l1: f64,
    pub transition_max_row_l1: f64,
    pub initial_l1: f64,
}

/// Row-wise L1 errors after relabelling the fitted model by `perm`.
pub fn recovery_error(
    truth: &CategoricalHmm,
    fitted: &CategoricalHmm,
    perm: &[usize],
) -> Result<RecoveryError> {
    check_dims(truth, fitted)?;
    let aligned = fitted.permute_states(perm)?;
    let max_rows = |a: Vec<&[f64]>, b: Vec<&[f64]>| {
        a.iter().zip(&b).map(|(x, y)| l1(x, y)).fold(0.0, f64::max)
    };
    Ok(RecoveryError {
        emission_max_row_l1: max_rows(
            truth.emission_rows().collect(),
            aligned.emission_rows().collect(),
        ),
        transition_max_row_l1: max_rows(
            truth.transition_rows().collect(),
            aligned.transition_rows().collect(),
        ),
        initial_l1: l1(truth.initial(), aligned.initial()),
    })
}
