use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::ProcessSequence;

use super::fit::{fit_encoded, FitOptions, FitResult};
use super::Alphabet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    Aic,
    #[default]
    Bic,
    LogLikelihood,
}

/// Free parameters of an `n`-state, `m`-symbol model:
/// `(n-1)` initial + `n(n-1)` transition + `n(m-1)` emission.
pub fn free_parameters(n_states: usize, n_symbols: usize) -> usize {
    n_states * n_states + n_states * n_symbols - n_states - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub n_states: usize,
    pub log_likelihood: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub n_parameters: usize,
    pub n_observations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectionReport {
    pub candidates: Vec<CandidateScore>,
    pub best_aic: usize,
    pub best_bic: usize,
    pub best_log_likelihood: usize,
    pub criterion: SelectionCriterion,
    pub selected: usize,
    pub criteria_agree: bool,
}

impl ModelSelectionReport {
    pub fn best_by(&self, criterion: SelectionCriterion) -> usize {
        match criterion {
            SelectionCriterion::Aic => self.best_aic,
            SelectionCriterion::Bic => self.best_bic,
            SelectionCriterion::LogLikelihood => self.best_log_likelihood,
        }
    }
}

/// Report plus the fitted model for every candidate that succeeded.
#[derive(Debug, Clone)]
pub struct ModelSelection {
    pub report: ModelSelectionReport,
    pub fits: BTreeMap<usize, FitResult>,
}

impl ModelSelection {
    pub fn selected_fit(&self) -> &FitResult {
        &self.fits[&self.report.selected]
    }
}

fn argbest(scores: &[(usize, f64)], lower_is_better: bool) -> usize {
    let mut best = scores[0];
    for &(n, s) in &scores[1..] {
        let better = if lower_is_better {
            s < best.1
        } else {
            s > best.1
        };
        if better {
            best = (n, s);
        }
    }
    best.0
}

pub fn select_state_count_encoded(
    obs: &[Vec<usize>],
    alphabet: &Alphabet,
    n_range: RangeInclusive<usize>,
    criterion: SelectionCriterion,
    seed: u64,
    options: &FitOptions,
) -> Result<ModelSelection> {
    if n_range.is_empty() || *n_range.start() == 0 {
        return Err(Error::validation(
            "hmm.states",
            "state range must be nonempty and start at 1 or more",
        ));
    }
    let n_obs: usize = obs.iter().map(Vec::len).sum();
    let m = alphabet.len();
    let results: Vec<(usize, Result<FitResult>)> = n_range
        .clone()
        .into_par_iter()
        .map(|n| (n, fit_encoded(obs, alphabet, n, seed, options)))
        .collect();

    let mut candidates = Vec::with_capacity(results.len());
    let mut fits = BTreeMap::new();
    for (n, res) in results {
        let k = free_parameters(n, m);
        match res {
            Ok(fit) => {
                let ll = fit.log_likelihood;
                candidates.push(CandidateScore {
                    n_states: n,
                    log_likelihood: Some(ll),
                    aic: Some(2.0 * k as f64 - 2.0 * ll),
                    bic: Some(k as f64 * (n_obs as f64).ln() - 2.0 * ll),
                    n_parameters: k,
                    n_observations: n_obs,
                    failure: None,
                });
                fits.insert(n, fit);
            }
            Err(e) => {
                log::warn!("{n}-state fit failed: {e}");
                candidates.push(CandidateScore {
                    n_states: n,
                    log_likelihood: None,
                    aic: None,
                    bic: None,
                    n_parameters: k,
                    n_observations: n_obs,
                    failure: Some(e.to_string()),
                });
            }
        }
    }
    let ok: Vec<&CandidateScore> = candidates.iter().filter(|c| c.failure.is_none()).collect();
    if ok.is_empty() {
        return Err(Error::Fit("every candidate state count failed".into()));
    }
    let collect = |f: fn(&CandidateScore) -> Option<f64>| -> Vec<(usize, f64)> {
        ok.iter()
            .map(|c| (c.n_states, f(c).expect("successful fit")))
            .collect()
    };
    let best_aic = argbest(&collect(|c| c.aic), true);
    let best_bic = argbest(&collect(|c| c.bic), true);
    let best_log_likelihood = argbest(&collect(|c| c.log_likelihood), false);
    let mut report = ModelSelectionReport {
        candidates,
        best_aic,
        best_bic,
        best_log_likelihood,
        criterion,
        selected: 0,
        criteria_agree: best_aic == best_bic && best_bic == best_log_likelihood,
    };
    report.selected = report.best_by(criterion);
    Ok(ModelSelection { report, fits })
}

/// Fit every state count in `n_range` with the full restart budget and
/// score each by AIC, BIC and log-likelihood.
pub fn select_state_count(
    sequences: &[ProcessSequence],
    alphabet: &Alphabet,
    n_range: RangeInclusive<usize>,
    criterion: SelectionCriterion,
    seed: u64,
    options: &FitOptions,
) -> Result<ModelSelection> {
    let obs = alphabet.encode_all(sequences)?;
    select_state_count_encoded(&obs, alphabet, n_range, criterion, seed, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::sample;
    use crate::hmm::testutil::random_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count() {
        assert_eq!(free_parameters(9, 8), 143);
        assert_eq!(free_parameters(1, 2), 1);
    }

    #[test]
    fn criteria_follow_their_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = random_model(&mut rng, 2, 3);
        let obs: Vec<Vec<usize>> = (0..15).map(|i| sample(&truth, 30, i).unwrap().0).collect();
        let opts = FitOptions {
            restarts: 3,
            ..Default::default()
        };
        let sel = select_state_count_encoded(
            &obs,
            truth.alphabet(),
            1..=3,
            SelectionCriterion::Bic,
            7,
            &opts,
        )
        .unwrap();
        assert_eq!(sel.report.candidates.len(), 3);
        for c in &sel.report.candidates {
            let ll = c.log_likelihood.unwrap();
            let k = free_parameters(c.n_states, 3) as f64;
            assert_eq!(c.n_observations, 450);
            assert!((c.aic.unwrap() - (2.0 * k - 2.0 * ll)).abs() < 1e-9);
            assert!((c.bic.unwrap() - (k * 450f64.ln() - 2.0 * ll)).abs() < 1e-9);
        }
        assert_eq!(sel.report.selected, sel.report.best_bic);
        assert!(sel.fits.contains_key(&sel.report.selected));
    }

    #[test]
    fn likelihood_grows_with_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let truth = random_model(&mut rng, 3, 4);
        let obs: Vec<Vec<usize>> = (0..40)
            .map(|i| sample(&truth, 50, 100 + i).unwrap().0)
            .collect();
        let sel = select_state_count_encoded(
            &obs,
            truth.alphabet(),
            1..=4,
            SelectionCriterion::Bic,
            3,
            &FitOptions::default(),
        )
        .unwrap();
        let lls: Vec<f64> = sel
            .report
            .candidates
            .iter()
            .map(|c| c.log_likelihood.unwrap())
            .collect();
        for w in lls.windows(2) {
            assert!(w[1] >= w[0] - 2.0, "{lls:?}");
        }
    }

    #[test]
    fn empty_range_is_rejected() {
        let alphabet = Alphabet::numbered(2);
        #[allow(clippy::reversed_empty_ranges)]
        let r = select_state_count_encoded(
            &[vec![0, 1]],
            &alphabet,
            3..=2,
            SelectionCriterion::Bic,
            1,
            &FitOptions::default(),
        );
        assert!(r.is_err());
    }
}
