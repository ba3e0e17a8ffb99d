use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::ProcessSequence;

use super::forward::LogParams;
use super::CategoricalHmm;

/// Most probable hidden-state path for one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticSequence {
    pub learner_id: String,
    pub states: Vec<usize>,
    /// Joint log probability of the path and the observations.
    pub log_prob: f64,
}

/// Viterbi decoding of an encoded sequence. Ties resolve to the lower state
/// index, both when picking the final state and at every backtrack step.
pub fn viterbi_encoded(
    model: &CategoricalHmm,
    learner_id: &str,
    obs: &[usize],
) -> Result<TacticSequence> {
    model.check_symbols(learner_id, obs)?;
    let lp = LogParams::new(model);
    let n = lp.n;
    let t_len = obs.len();
    if t_len == 0 {
        return Ok(TacticSequence {
            learner_id: learner_id.to_string(),
            states: Vec::new(),
            log_prob: 0.0,
        });
    }
    let mut delta: Vec<f64> = (0..n).map(|i| lp.initial[i] + lp.b(i, obs[0])).collect();
    let mut next = vec![0.0; n];
    let mut back = vec![0usize; t_len * n];
    for t in 1..t_len {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let v = d + lp.a(i, j);
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + lp.b(j, obs[t]);
            back[t * n + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (i, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = i;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::ZeroProbability {
            learner_id: learner_id.to_string(),
        });
    }
    let mut states = vec![0usize; t_len];
    states[t_len - 1] = last;
    for t in (1..t_len).rev() {
        states[t - 1] = back[t * n + states[t]];
    }
    Ok(TacticSequence {
        learner_id: learner_id.to_string(),
        states,
        log_prob: best,
    })
}

pub fn viterbi(model: &CategoricalHmm, sequence: &ProcessSequence) -> Result<TacticSequence> {
    let obs = model.alphabet().encode(sequence)?;
    viterbi_encoded(model, &sequence.learner_id, &obs)
}

pub fn decode_all(
    model: &CategoricalHmm,
    sequences: &[ProcessSequence],
) -> Result<Vec<TacticSequence>> {
    use rayon::prelude::*;
    sequences.par_iter().map(|s| viterbi(model, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::testutil::random_model;
    use crate::hmm::{sequence_log_likelihood, Alphabet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_log_prob(model: &CategoricalHmm, obs: &[usize], path: &[usize]) -> f64 {
        let mut lp = model.initial()[path[0]].ln() + model.emission(path[0], obs[0]).ln();
        for t in 1..obs.len() {
            lp +=
                model.transition(path[t - 1], path[t]).ln() + model.emission(path[t], obs[t]).ln();
        }
        lp
    }

    #[test]
    fn deterministic_chain() {
        let m = CategoricalHmm::new(
            Alphabet::numbered(2),
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(
            viterbi_encoded(&m, "a", &[0, 0, 0]).unwrap().states,
            vec![0, 0, 0]
        );
        assert!(matches!(
            viterbi_encoded(&m, "a", &[0, 1]).unwrap_err(),
            Error::ZeroProbability { .. }
        ));
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, t_len) = (3usize, 7usize);
        for _ in 0..10 {
            let m = random_model(&mut rng, n, 4);
            let obs: Vec<usize> = (0..t_len).map(|_| rng.random_range(0..4)).collect();
            let mut best = (f64::NEG_INFINITY, vec![]);
            for code in 0..n.pow(t_len as u32) {
                let path: Vec<usize> = (0..t_len).map(|t| code / n.pow(t as u32) % n).collect();
                let lp = path_log_prob(&m, &obs, &path);
                if lp > best.0 {
                    best = (lp, path);
                }
            }
            let got = viterbi_encoded(&m, "x", &obs).unwrap();
            assert_eq!(got.states, best.1);
            assert!((got.log_prob - best.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ties_go_to_lower_state() {
        // Fully symmetric two-state model: every path has equal probability.
        let m = CategoricalHmm::new(
            Alphabet::numbered(2),
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(
            viterbi_encoded(&m, "a", &[1, 0, 1, 1]).unwrap().states,
            vec![0; 4]
        );
    }

    #[test]
    fn path_probability_bounded_by_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let m = random_model(&mut rng, 4, 6);
            let len = rng.random_range(1..60);
            let obs: Vec<usize> = (0..len).map(|_| rng.random_range(0..6)).collect();
            let path = viterbi_encoded(&m, "a", &obs).unwrap();
            assert_eq!(path.states.len(), obs.len());
            assert!(path.log_prob <= sequence_log_likelihood(&m, &obs) + 1e-12);
        }
    }

    #[test]
    fn relabelling_states_relabels_the_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = random_model(&mut rng, 3, 5);
        let perm = [2, 0, 1];
        let p = m.permute_states(&perm).unwrap();
        let obs: Vec<usize> = (0..40).map(|_| rng.random_range(0..5)).collect();
        let a = viterbi_encoded(&m, "a", &obs).unwrap();
        let b = viterbi_encoded(&p, "a", &obs).unwrap();
        // New state k is old state perm[k].
        let mapped: Vec<usize> = b.states.iter().map(|&k| perm[k]).collect();
        assert_eq!(mapped, a.states);
        let (la, lb) = (
            sequence_log_likelihood(&m, &obs),
            sequence_log_likelihood(&p, &obs),
        );
        assert!(((la - lb) / la).abs() < 1e-12);
    }

    #[test]
    fn unknown_symbol_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 2, 3);
        assert!(matches!(
            viterbi_encoded(&m, "q", &[0, 5]).unwrap_err(),
            Error::UnknownSymbol { index: 1, .. }
        ));
    }
}
