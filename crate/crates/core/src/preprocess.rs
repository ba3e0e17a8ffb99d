//! Cohort filters applied before modelling, in fixed order: GenAI users
//! only, uninformative codes dropped, then sequence-length outliers removed
//! once by z-score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{ProcessCode, ProcessSequence};

/// Denominator used for the length standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdKind {
    #[default]
    Sample,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoGenaiUse,
    EmptyAfterCleaning,
    LengthOutlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub learner_id: String,
    pub reason: ExclusionReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortFilterReport {
    pub n_input: usize,
    pub n_after_genai_filter: usize,
    pub n_after_uninformative: usize,
    pub n_after_outlier_removal: usize,
    pub length_mean: Option<f64>,
    pub length_sd: Option<f64>,
    pub z_max: f64,
    pub exclusions: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessOptions {
    pub genai_filter: bool,
    pub z_max: f64,
    pub sd: SdKind,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            genai_filter: true,
            z_max: 3.0,
            sd: SdKind::Sample,
        }
    }
}

impl PreprocessOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(Error::validation(
                "preprocess.z_max",
                "must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// Keep learners with at least one `CHATGPT` code.
pub fn filter_genai_users(
    sequences: Vec<ProcessSequence>,
) -> (Vec<ProcessSequence>, Vec<ProcessSequence>) {
    sequences
        .into_iter()
        .partition(|s| s.codes.contains(&ProcessCode::Chatgpt))
}

/// Remove `NOT_RECOGNIZED` and missing codes, preserving order.
pub fn drop_uninformative(sequence: ProcessSequence) -> ProcessSequence {
    let ProcessSequence { learner_id, codes } = sequence;
    ProcessSequence {
        learner_id,
        codes: codes.into_iter().filter(|c| c.is_informative()).collect(),
    }
}

/// Outcome of the length-outlier step.
#[derive(Debug, Clone)]
pub struct OutlierOutcome {
    pub kept: Vec<ProcessSequence>,
    pub removed: Vec<(ProcessSequence, f64)>,
    pub mean: f64,
    pub sd: f64,
}

/// Drop learners whose sequence length lies more than `z_max` standard
/// deviations from the cohort mean. Mean and sd are computed once on the
/// incoming cohort.
pub fn remove_length_outliers(
    sequences: Vec<ProcessSequence>,
    z_max: f64,
    sd_kind: SdKind,
) -> Result<OutlierOutcome> {
    if sequences.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "length outlier removal needs at least 2 sequences, got {}",
            sequences.len()
        )));
    }
    let n = sequences.len() as f64;
    let mean = sequences.iter().map(|s| s.len() as f64).sum::<f64>() / n;
    let ss: f64 = sequences
        .iter()
        .map(|s| (s.len() as f64 - mean).powi(2))
        .sum();
    let denom = match sd_kind {
        SdKind::Sample => n - 1.0,
        SdKind::Population => n,
    };
    let sd = (ss / denom).sqrt();
    let mut kept = Vec::with_capacity(sequences.len());
    let mut removed = Vec::new();
    for s in sequences {
        let z = if sd > 0.0 {
            (s.len() as f64 - mean) / sd
        } else {
            0.0
        };
        if z.abs() > z_max {
            removed.push((s, z));
        } else {
            kept.push(s);
        }
    }
    Ok(OutlierOutcome {
        kept,
        removed,
        mean,
        sd,
    })
}

/// Run the three filters in order, each exactly once.
pub fn preprocess_cohort(
    sequences: Vec<ProcessSequence>,
    options: &PreprocessOptions,
) -> Result<(Vec<ProcessSequence>, CohortFilterReport)> {
    options.validate()?;
    let mut report = CohortFilterReport {
        n_input: sequences.len(),
        z_max: options.z_max,
        ..Default::default()
    };

    let users = if options.genai_filter {
        let (users, others) = filter_genai_users(sequences);
        report
            .exclusions
            .extend(others.into_iter().map(|s| Exclusion {
                learner_id: s.learner_id,
                reason: ExclusionReason::NoGenaiUse,
                z_score: None,
            }));
        users
    } else {
        sequences
    };
    report.n_after_genai_filter = users.len();
    if users.is_empty() {
        report
            .warnings
            .push("no learner used GenAI; cohort is empty".into());
    }

    let mut cleaned = Vec::with_capacity(users.len());
    for s in users.into_iter().map(drop_uninformative) {
        if s.is_empty() {
            report.exclusions.push(Exclusion {
                learner_id: s.learner_id,
                reason: ExclusionReason::EmptyAfterCleaning,
                z_score: None,
            });
        } else {
            cleaned.push(s);
        }
    }
    report.n_after_uninformative = cleaned.len();

    let kept = if cleaned.len() >= 2 {
        let outcome = remove_length_outliers(cleaned, options.z_max, options.sd)?;
        report.length_mean = Some(outcome.mean);
        report.length_sd = Some(outcome.sd);
        report
            .exclusions
            .extend(outcome.removed.into_iter().map(|(s, z)| Exclusion {
                learner_id: s.learner_id,
                reason: ExclusionReason::LengthOutlier,
                z_score: Some(z),
            }));
        outcome.kept
    } else {
        report
            .warnings
            .push("fewer than 2 sequences; length outlier removal skipped".into());
        cleaned
    };
    report.n_after_outlier_removal = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ProcessCode::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn seq(id: &str, codes: &[ProcessCode]) -> ProcessSequence {
        ProcessSequence::new(id, codes.to_vec())
    }

    fn of_len(id: &str, len: usize) -> ProcessSequence {
        ProcessSequence::new(id, vec![Chatgpt; len])
    }

    #[test]
    fn genai_filter_keeps_only_chatgpt_users() {
        let (kept, dropped) = filter_genai_users(vec![
            seq("a", &[Lcf, Chatgpt, Hceo]),
            seq("b", &[Lcf, Hceo]),
        ]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].learner_id, "a");
        assert_eq!(dropped[0].learner_id, "b");
    }

    #[test]
    fn genai_filter_counts_match() {
        // 165 users among 241 learners.
        let cohort: Vec<_> = (0..241)
            .map(|i| {
                let codes = if i < 165 {
                    vec![Lcf, Chatgpt]
                } else {
                    vec![Lcf]
                };
                ProcessSequence::new(format!("s{i}"), codes)
            })
            .collect();
        assert_eq!(filter_genai_users(cohort).0.len(), 165);
    }

    #[test]
    fn uninformative_codes_are_removed() {
        assert_eq!(
            drop_uninformative(seq("a", &[Lcf, NotRecognized, Hceo])).codes,
            vec![Lcf, Hceo]
        );
        assert_eq!(
            drop_uninformative(seq("a", &[Mco, Mcp])).codes,
            vec![Mco, Mcp]
        );
        assert_eq!(
            drop_uninformative(seq("a", &[Missing, Mco])).codes,
            vec![Mco]
        );
    }

    #[test]
    fn emptied_learner_is_dropped_with_reason() {
        let cohort = vec![
            seq("a", &[Chatgpt, Lcf]),
            seq("b", &[Chatgpt, Mco]),
            seq("c", &[NotRecognized]),
        ];
        let opts = PreprocessOptions {
            genai_filter: false,
            ..Default::default()
        };
        let (kept, report) = preprocess_cohort(cohort, &opts).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(report.exclusions.len(), 1);
        assert_eq!(
            report.exclusions[0].reason,
            ExclusionReason::EmptyAfterCleaning
        );
    }

    #[test]
    fn equal_lengths_remove_nothing() {
        let cohort: Vec<_> = (0..10).map(|i| of_len(&i.to_string(), 7)).collect();
        let out = remove_length_outliers(cohort, 3.0, SdKind::Sample).unwrap();
        assert_eq!(out.kept.len(), 10);
        assert_eq!(out.sd, 0.0);
    }

    #[test]
    fn single_long_sequence_is_an_outlier() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(200.0f64, 10.0).unwrap();
        let mut lens: Vec<usize> = (0..49)
            .map(|_| normal.sample(&mut rng).round().max(1.0) as usize)
            .collect();
        lens.push(600);
        // Oracle: direct formula.
        let n = lens.len() as f64;
        let mean = lens.iter().sum::<usize>() as f64 / n;
        let sd = (lens.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected: Vec<usize> = (0..lens.len())
            .filter(|&i| ((lens[i] as f64 - mean) / sd).abs() > 3.0)
            .collect();
        assert_eq!(expected, vec![49]);

        let cohort: Vec<_> = lens
            .iter()
            .enumerate()
            .map(|(i, &l)| of_len(&i.to_string(), l))
            .collect();
        let out = remove_length_outliers(cohort, 3.0, SdKind::Sample).unwrap();
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.removed[0].0.learner_id, "49");
        assert!((out.mean - mean).abs() < 1e-12);
        assert!((out.sd - sd).abs() < 1e-12);
    }

    #[test]
    fn outlier_step_needs_two_sequences() {
        assert!(remove_length_outliers(vec![of_len("a", 3)], 3.0, SdKind::Sample).is_err());
    }

    #[test]
    fn population_sd_switch() {
        let cohort = vec![of_len("a", 1), of_len("b", 3)];
        let s = remove_length_outliers(cohort.clone(), 3.0, SdKind::Sample).unwrap();
        let p = remove_length_outliers(cohort, 3.0, SdKind::Population).unwrap();
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-12);
        assert!((p.sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_counts_reconcile() {
        let mut cohort: Vec<_> = (0..30)
            .map(|i| of_len(&format!("u{i}"), 20 + i % 3))
            .collect();
        cohort.push(of_len("long", 400));
        cohort.push(seq("nogpt", &[Lcf, Lcf]));
        let (kept, report) = preprocess_cohort(cohort, &PreprocessOptions::default()).unwrap();
        assert_eq!(report.n_input, 32);
        assert_eq!(report.n_after_genai_filter, 31);
        assert_eq!(report.n_after_uninformative, 31);
        assert_eq!(report.n_after_outlier_removal, kept.len());
        assert_eq!(report.n_input - kept.len(), report.exclusions.len());
        assert!(report
            .exclusions
            .iter()
            .any(|e| e.learner_id == "long" && e.reason == ExclusionReason::LengthOutlier));
        assert!(report.n_after_genai_filter >= report.n_after_uninformative);
        assert!(report.n_after_uninformative >= report.n_after_outlier_removal);
    }

    #[test]
    fn filters_are_permutation_equivariant() {
        let mut cohort: Vec<_> = (0..40)
            .map(|i| of_len(&format!("u{i}"), 10 + (i * 7) % 13))
            .collect();
        cohort.push(of_len("big", 200));
        cohort.push(seq("x", &[Lcf]));
        let (a, _) = preprocess_cohort(cohort.clone(), &PreprocessOptions::default()).unwrap();
        cohort.reverse();
        let (b, _) = preprocess_cohort(cohort, &PreprocessOptions::default()).unwrap();
        let mut ids_a: Vec<_> = a.iter().map(|s| s.learner_id.clone()).collect();
        let mut ids_b: Vec<_> = b.iter().map(|s| s.learner_id.clone()).collect();
        ids_a.sort();
        ids_b.sort();
        assert_eq!(ids_a, ids_b);
    }
}
