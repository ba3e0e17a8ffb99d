use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{ProcessCode, ProcessSequence};

use super::CategoricalHmm;

fn categorical(row: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(row).expect("validated stochastic row")
}

impl CategoricalHmm {
    /// Draw `(symbols, states)` of length `len` using `rng`.
    pub fn sample_with<R: Rng>(&self, len: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
        if len == 0 {
            return Err(Error::InvalidArgument(
                "sample length must be at least 1".into(),
            ));
        }
        let initial = categorical(&self.initial);
        let transitions: Vec<_> = self.transition_rows().map(categorical).collect();
        let emissions: Vec<_> = self.emission_rows().map(categorical).collect();
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut s = initial.sample(rng);
        for t in 0..len {
            if t > 0 {
                s = transitions[s].sample(rng);
            }
            states.push(s);
            symbols.push(emissions[s].sample(rng));
        }
        Ok((symbols, states))
    }
}

/// Draw `len` symbols and the hidden path that produced them.
pub fn sample(model: &CategoricalHmm, len: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    model.sample_with(len, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Sample and decode symbols back into process codes. The model alphabet
/// must consist of process code names.
pub fn sample_process_sequence(
    model: &CategoricalHmm,
    learner_id: &str,
    len: usize,
    seed: u64,
) -> Result<(ProcessSequence, Vec<usize>)> {
    let codes: Vec<ProcessCode> = model
        .alphabet()
        .symbols()
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let (symbols, states) = sample(model, len, seed)?;
    let seq = ProcessSequence::new(learner_id, symbols.into_iter().map(|o| codes[o]).collect());
    Ok((seq, states))
}
