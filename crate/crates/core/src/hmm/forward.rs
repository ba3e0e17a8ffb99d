use crate::error::Result;
use crate::trace::ProcessSequence;

use super::{Alphabet, CategoricalHmm};

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain copies of the model parameters.
pub(crate) struct LogParams {
    pub n: usize,
    pub m: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<f64>,
    pub emission: Vec<f64>,
}

impl LogParams {
    pub fn new(model: &CategoricalHmm) -> Self {
        Self {
            n: model.n_states(),
            m: model.n_symbols(),
            initial: model.initial.iter().map(|p| p.ln()).collect(),
            transition: model.transition.iter().map(|p| p.ln()).collect(),
            emission: model.emission.iter().map(|p| p.ln()).collect(),
        }
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.n + j]
    }

    #[inline]
    pub fn b(&self, i: usize, o: usize) -> f64 {
        self.emission[i * self.m + o]
    }
}

/// Forward variables `ln P(o_0..o_t, s_t = i)` as a `T x N` row-major table,
/// plus `ln P(O)`.
pub fn log_forward(model: &CategoricalHmm, obs: &[usize]) -> (Vec<f64>, f64) {
    let lp = LogParams::new(model);
    let n = lp.n;
    let t_len = obs.len();
    if t_len == 0 {
        return (Vec::new(), 0.0);
    }
    let mut alpha = vec![0.0; t_len * n];
    for i in 0..n {
        alpha[i] = lp.initial[i] + lp.b(i, obs[0]);
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        for j in 0..n {
            cur[j] = log_sum_exp((0..n).map(|i| prev[i] + lp.a(i, j))) + lp.b(j, obs[t]);
        }
    }
    let total = log_sum_exp(alpha[(t_len - 1) * n..].iter().copied());
    (alpha, total)
}

/// Backward variables `ln P(o_{t+1}.. | s_t = i)` and `ln P(O)` computed
/// from the backward termination.
pub fn log_backward(model: &CategoricalHmm, obs: &[usize]) -> (Vec<f64>, f64) {
    let lp = LogParams::new(model);
    let n = lp.n;
    let t_len = obs.len();
    if t_len == 0 {
        return (Vec::new(), 0.0);
    }
    let mut beta = vec![0.0; t_len * n];
    for t in (0..t_len - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * n);
        let cur = &mut cur[t * n..];
        let next = &next[..n];
        for i in 0..n {
            cur[i] = log_sum_exp((0..n).map(|j| lp.a(i, j) + lp.b(j, obs[t + 1]) + next[j]));
        }
    }
    let total = log_sum_exp((0..n).map(|i| lp.initial[i] + lp.b(i, obs[0]) + beta[i]));
    (beta, total)
}

/// `ln P(O | model)` for one encoded sequence via the log-space forward pass.
pub fn sequence_log_likelihood(model: &CategoricalHmm, obs: &[usize]) -> f64 {
    log_forward(model, obs).1
}

/// Posterior state marginals `P(s_t = i | O)` as a `T x N` table.
pub fn posteriors(model: &CategoricalHmm, obs: &[usize]) -> Vec<f64> {
    let (alpha, total) = log_forward(model, obs);
    let (beta, _) = log_backward(model, obs);
    alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - total).exp())
        .collect()
}

/// Total log-likelihood of a cohort, sequences treated as independent.
pub fn log_likelihood(model: &CategoricalHmm, sequences: &[ProcessSequence]) -> Result<f64> {
    let alphabet: &Alphabet = model.alphabet();
    let mut total = 0.0;
    for seq in sequences {
        let obs = alphabet.encode(seq)?;
        total += sequence_log_likelihood(model, &obs);
    }
    Ok(total)
}

/// Same quantity as [`sequence_log_likelihood`] computed with per-step
/// scaling instead of log-sum-exp; this is what the EM loop uses.
pub fn scaled_log_likelihood(model: &CategoricalHmm, obs: &[usize]) -> f64 {
    let n = model.n_states();
    if obs.is_empty() {
        return 0.0;
    }
    let mut alpha: Vec<f64> = (0..n)
        .map(|i| model.initial[i] * model.emission(i, obs[0]))
        .collect();
    let mut next = vec![0.0; n];
    let mut ll = 0.0;
    let c: f64 = alpha.iter().sum();
    ll += c.ln();
    alpha.iter_mut().for_each(|a| *a /= c);
    for &o in &obs[1..] {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &a) in alpha.iter().enumerate() {
            for (x, &t) in next.iter_mut().zip(model.transition_row(i)) {
                *x += a * t;
            }
        }
        for (j, x) in next.iter_mut().enumerate() {
            *x *= model.emission(j, o);
        }
        let c: f64 = next.iter().sum();
        ll += c.ln();
        if c == 0.0 {
            return f64::NEG_INFINITY;
        }
        for (a, x) in alpha.iter_mut().zip(&next) {
            *a = x / c;
        }
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::testutil::random_model;
    use crate::trace::ProcessCode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sum over every hidden path of P(path) P(O | path).
    fn brute_force_likelihood(model: &CategoricalHmm, obs: &[usize]) -> f64 {
        let n = model.n_states();
        let t_len = obs.len();
        let mut total = 0.0;
        let mut path = vec![0usize; t_len];
        for code in 0..n.pow(t_len as u32) {
            let mut c = code;
            for s in path.iter_mut() {
                *s = c % n;
                c /= n;
            }
            let mut p = model.initial()[path[0]] * model.emission(path[0], obs[0]);
            for t in 1..t_len {
                p *= model.transition(path[t - 1], path[t]) * model.emission(path[t], obs[t]);
            }
            total += p;
        }
        total
    }

    #[test]
    fn single_state_uniform_closed_form() {
        let alphabet = Alphabet::numbered(4);
        let m =
            CategoricalHmm::new(alphabet, vec![1.0], vec![vec![1.0]], vec![vec![0.25; 4]]).unwrap();
        let ll = sequence_log_likelihood(&m, &[0, 3, 2]);
        assert!((ll - 3.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_model(&mut rng, 2, 3);
            let obs: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
            let expected = brute_force_likelihood(&m, &obs).ln();
            let got = sequence_log_likelihood(&m, &obs);
            assert!(
                ((got - expected) / expected).abs() < 1e-10,
                "{got} vs {expected}"
            );
        }
    }

    #[test]
    fn cohort_likelihood_is_additive() {
        let m = CategoricalHmm::new(
            Alphabet::process_codes(),
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.125; 8], vec![0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]],
        )
        .unwrap();
        let a = ProcessSequence::new("a", vec![ProcessCode::Mco, ProcessCode::Lcf]);
        let b = ProcessSequence::new("b", vec![ProcessCode::Chatgpt]);
        let both = log_likelihood(&m, &[a.clone(), b.clone()]).unwrap();
        let sep = log_likelihood(&m, &[a]).unwrap() + log_likelihood(&m, &[b]).unwrap();
        assert!((both - sep).abs() < 1e-12);
        let bad = ProcessSequence::new("z", vec![ProcessCode::NotRecognized]);
        assert!(log_likelihood(&m, &[bad]).is_err());
    }

    #[test]
    fn forward_and_backward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_model(&mut rng, 4, 5);
            let obs: Vec<usize> = (0..300).map(|_| rng.random_range(0..5)).collect();
            let f = log_forward(&m, &obs).1;
            let b = log_backward(&m, &obs).1;
            assert!(((f - b) / f).abs() < 1e-8);
        }
    }

    #[test]
    fn scaled_and_log_space_agree_on_long_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 5, 8);
        let obs: Vec<usize> = (0..5000).map(|_| rng.random_range(0..8)).collect();
        let a = sequence_log_likelihood(&m, &obs);
        let b = scaled_log_likelihood(&m, &obs);
        assert!(a.is_finite());
        assert!(((a - b) / a).abs() < 1e-9);
    }

    #[test]
    fn posterior_marginals_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 3, 4);
        let obs: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        let post = posteriors(&m, &obs);
        for row in post.chunks_exact(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
