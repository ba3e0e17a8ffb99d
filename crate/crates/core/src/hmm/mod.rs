//! Categorical-emission hidden Markov models over process codes: likelihood,
//! Baum-Welch estimation, Viterbi decoding, sampling and state-count
//! selection by information criteria.

mod fit;
mod forward;
mod sample;
mod select;
mod viterbi;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{ProcessCode, ProcessSequence};

pub use fit::{
    fit, fit_encoded, fit_single_run, FitOptions, FitResult, RestartSummary, RunOutcome,
};
pub use forward::{
    log_backward, log_forward, log_likelihood, posteriors, scaled_log_likelihood,
    sequence_log_likelihood,
};
pub use sample::{sample, sample_process_sequence};
pub use select::{
    free_parameters, select_state_count, select_state_count_encoded, CandidateScore,
    ModelSelection, ModelSelectionReport, SelectionCriterion,
};
pub use viterbi::{decode_all, viterbi, viterbi_encoded, TacticSequence};

/// Row sums must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Ordered observation symbols and their lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::validation(
                    "alphabet",
                    format!("symbol {s:?} repeated"),
                ));
            }
        }
        Ok(Self { symbols, index })
    }

    /// The eight informative process codes.
    pub fn process_codes() -> Self {
        Self::new(ProcessCode::INFORMATIVE.iter().map(|c| c.as_str())).expect("distinct codes")
    }

    /// `s0, s1, ...` for synthetic work with arbitrary alphabet sizes.
    pub fn numbered(m: usize) -> Self {
        Self::new((0..m).map(|i| format!("s{i}"))).expect("distinct symbols")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn encode(&self, seq: &ProcessSequence) -> Result<Vec<usize>> {
        seq.codes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.index_of(c.as_str())
                    .ok_or_else(|| Error::UnknownSymbol {
                        learner_id: seq.learner_id.clone(),
                        index: i,
                        symbol: c.as_str().to_string(),
                    })
            })
            .collect()
    }

    pub fn encode_all(&self, seqs: &[ProcessSequence]) -> Result<Vec<Vec<usize>>> {
        seqs.iter().map(|s| self.encode(s)).collect()
    }
}

impl Serialize for Alphabet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.symbols.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let symbols = Vec::<String>::deserialize(d)?;
        Alphabet::new(symbols).map_err(serde::de::Error::custom)
    }
}

/// HMM with `n_states` hidden states and a categorical emission over an
/// alphabet of `n_symbols` codes. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalHmm {
    alphabet: Alphabet,
    n_states: usize,
    initial: Vec<f64>,
    transition: Vec<f64>,
    emission: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmmRepr {
    alphabet: Alphabet,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
}

impl Serialize for CategoricalHmm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HmmRepr {
            alphabet: self.alphabet.clone(),
            initial: self.initial.clone(),
            transition: self.transition_rows().map(<[f64]>::to_vec).collect(),
            emission: self.emission_rows().map(<[f64]>::to_vec).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CategoricalHmm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = HmmRepr::deserialize(d)?;
        CategoricalHmm::new(r.alphabet, r.initial, r.transition, r.emission)
            .map_err(serde::de::Error::custom)
    }
}

fn check_distribution(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::validation(
            what,
            "entries must be finite and nonnegative",
        ));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::validation(
            what,
            format!("sums to {sum}, expected 1"),
        ));
    }
    Ok(())
}

impl CategoricalHmm {
    pub fn new(
        alphabet: Alphabet,
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = initial.len();
        let m = alphabet.len();
        if n == 0 {
            return Err(Error::validation("hmm", "need at least one state"));
        }
        if m < 2 {
            return Err(Error::validation("hmm", "need at least two symbols"));
        }
        if transition.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(Error::validation("transition", format!("must be {n}x{n}")));
        }
        if emission.len() != n || emission.iter().any(|r| r.len() != m) {
            return Err(Error::validation("emission", format!("must be {n}x{m}")));
        }
        let model = Self {
            alphabet,
            n_states: n,
            initial,
            transition: transition.concat(),
            emission: emission.concat(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Build from flat row-major buffers without re-checking stochasticity.
    pub(crate) fn from_parts(
        alphabet: Alphabet,
        initial: Vec<f64>,
        transition: Vec<f64>,
        emission: Vec<f64>,
    ) -> Self {
        let n_states = initial.len();
        debug_assert_eq!(transition.len(), n_states * n_states);
        debug_assert_eq!(emission.len(), n_states * alphabet.len());
        Self {
            alphabet,
            n_states,
            initial,
            transition,
            emission,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution("initial", &self.initial)?;
        for (i, row) in self.transition_rows().enumerate() {
            check_distribution(&format!("transition row {i}"), row)?;
        }
        for (i, row) in self.emission_rows().enumerate() {
            check_distribution(&format!("emission row {i}"), row)?;
        }
        Ok(())
    }

    /// Largest |row sum - 1| over the initial vector and all matrix rows.
    pub fn max_row_sum_error(&self) -> f64 {
        std::iter::once(self.initial.as_slice())
            .chain(self.transition_rows())
            .chain(self.emission_rows())
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    pub fn transition_row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.n_states..(from + 1) * self.n_states]
    }

    pub fn transition_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.transition.chunks_exact(self.n_states)
    }

    pub fn emission(&self, state: usize, symbol: usize) -> f64 {
        self.emission[state * self.n_symbols() + symbol]
    }

    pub fn emission_row(&self, state: usize) -> &[f64] {
        let m = self.n_symbols();
        &self.emission[state * m..(state + 1) * m]
    }

    pub fn emission_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.emission.chunks_exact(self.n_symbols())
    }

    /// Relabel hidden states: new state `k` is old state `perm[k]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_states;
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidArgument(format!(
                "{perm:?} is not a permutation of 0..{n}"
            )));
        }
        let initial = perm.iter().map(|&p| self.initial[p]).collect();
        let transition = perm
            .iter()
            .map(|&p| perm.iter().map(|&q| self.transition(p, q)).collect())
            .collect();
        let emission = perm
            .iter()
            .map(|&p| self.emission_row(p).to_vec())
            .collect();
        Self::new(self.alphabet.clone(), initial, transition, emission)
    }

    pub(crate) fn check_symbols(&self, learner_id: &str, obs: &[usize]) -> Result<()> {
        let m = self.n_symbols();
        match obs.iter().position(|&o| o >= m) {
            Some(index) => Err(Error::UnknownSymbol {
                learner_id: learner_id.to_string(),
                index,
                symbol: obs[index].to_string(),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    pub fn random_model<R: Rng>(rng: &mut R, n: usize, m: usize) -> CategoricalHmm {
        let mut row = |len: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        };
        let initial = row(n);
        let transition = (0..n).map(|_| row(n)).collect();
        let emission = (0..n).map(|_| row(m)).collect();
        CategoricalHmm::new(Alphabet::numbered(m), initial, transition, emission).unwrap()
    }
}
