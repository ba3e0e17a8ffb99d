//! Baum-Welch estimation with seeded random restarts.
//!
//! The E-step runs the scaled forward-backward recursions (one normalizer per
//! time step), which is stable for arbitrarily long sequences without the
//! cost of log-sum-exp. The M-step re-estimates every parameter from expected
//! counts plus an additive pseudocount.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::trace::ProcessSequence;

use super::{Alphabet, CategoricalHmm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub restarts: usize,
    /// Stop once an iteration improves the log-likelihood by less than this (nats).
    pub tol: f64,
    pub max_iter: usize,
    /// Pseudocount added to every expected-count cell.
    pub smoothing: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            tol: 1e-4,
            max_iter: 500,
            smoothing: 1e-3,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::validation("hmm.restarts", "must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::validation(
                "hmm.tol",
                "must be finite and nonnegative",
            ));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::validation(
                "hmm.smoothing",
                "must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// One EM run from one random initialization.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed_path: [u64; 2],
    pub model: CategoricalHmm,
    pub log_likelihood: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the parameters at each iteration, starting with the
    /// random initialization.
    pub ll_trace: Vec<f64>,
    /// Largest row-sum deviation from 1 after each M-step.
    pub row_error_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub log_likelihood: Option<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discarded: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: CategoricalHmm,
    pub log_likelihood: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub ll_trace: Vec<f64>,
    #[serde(skip)]
    pub row_error_trace: Vec<f64>,
    pub restarts: Vec<RestartSummary>,
    pub warnings: Vec<String>,
}

fn dirichlet_row<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    // Symmetric Dirichlet(1): normalized unit exponentials.
    let draws: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / sum).collect()
}

pub(crate) fn random_init<R: Rng>(rng: &mut R, alphabet: &Alphabet, n: usize) -> CategoricalHmm {
    let m = alphabet.len();
    let initial = dirichlet_row(rng, n);
    let transition: Vec<f64> = (0..n).flat_map(|_| dirichlet_row(rng, n)).collect();
    let emission: Vec<f64> = (0..n).flat_map(|_| dirichlet_row(rng, m)).collect();
    CategoricalHmm::from_parts(alphabet.clone(), initial, transition, emission)
}

/// Expected sufficient statistics accumulated over a cohort.
struct Counts {
    initial: Vec<f64>,
    /// Sum over t of alpha_t(i) * w_{t+1}(j); multiplied by A_ij at the end.
    trans_partial: Vec<f64>,
    emission: Vec<f64>,
}

/// Per-run work buffers, sized for the longest sequence.
struct Workspace {
    alpha: Vec<f64>,
    scale: Vec<f64>,
    beta: Vec<f64>,
    beta_next: Vec<f64>,
    w: Vec<f64>,
    /// Emission probabilities laid out symbol-major: `emit_t[o * n + i]`.
    emit_t: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize, max_len: usize) -> Self {
        Self {
            alpha: vec![0.0; max_len * n],
            scale: vec![0.0; max_len],
            beta: vec![0.0; n],
            beta_next: vec![0.0; n],
            w: vec![0.0; n],
            emit_t: vec![0.0; m * n],
        }
    }
}

/// Run the E-step over every sequence. Returns the cohort log-likelihood of
/// `model`, or `None` if some sequence has zero probability.
fn e_step(
    model: &CategoricalHmm,
    obs: &[Vec<usize>],
    ws: &mut Workspace,
    counts: &mut Counts,
) -> Option<f64> {
    // Small state counts get a monomorphized body so the inner loops unroll.
    match model.n_states() {
        1 => e_step_impl::<1>(model, obs, ws, counts),
        2 => e_step_impl::<2>(model, obs, ws, counts),
        3 => e_step_impl::<3>(model, obs, ws, counts),
        4 => e_step_impl::<4>(model, obs, ws, counts),
        5 => e_step_impl::<5>(model, obs, ws, counts),
        6 => e_step_impl::<6>(model, obs, ws, counts),
        7 => e_step_impl::<7>(model, obs, ws, counts),
        8 => e_step_impl::<8>(model, obs, ws, counts),
        9 => e_step_impl::<9>(model, obs, ws, counts),
        10 => e_step_impl::<10>(model, obs, ws, counts),
        11 => e_step_impl::<11>(model, obs, ws, counts),
        12 => e_step_impl::<12>(model, obs, ws, counts),
        _ => e_step_impl::<0>(model, obs, ws, counts),
    }
}

/// `K` is the state count when known at compile time, 0 otherwise.
#[inline(always)]
fn e_step_impl<const K: usize>(
    model: &CategoricalHmm,
    obs: &[Vec<usize>],
    ws: &mut Workspace,
    counts: &mut Counts,
) -> Option<f64> {
    let n = if K > 0 { K } else { model.n_states() };
    let m = model.n_symbols();
    for o in 0..m {
        for i in 0..n {
            ws.emit_t[o * n + i] = model.emission(i, o);
        }
    }
    counts.initial.iter_mut().for_each(|x| *x = 0.0);
    counts.trans_partial.iter_mut().for_each(|x| *x = 0.0);
    counts.emission.iter_mut().for_each(|x| *x = 0.0);
    let a = &model.transition[..n * n];
    let pi = &model.initial[..n];
    let mut total = 0.0;

    for seq in obs {
        let t_len = seq.len();
        if t_len == 0 {
            continue;
        }
        // Products of normalizers are folded into `total` before they can
        // underflow, avoiding one ln() per step.
        let mut scale_product = 1.0f64;
        // Forward, normalized per step.
        {
            let e0 = &ws.emit_t[seq[0] * n..(seq[0] + 1) * n];
            let cur = &mut ws.alpha[..n];
            let mut c = 0.0;
            for i in 0..n {
                let v = pi[i] * e0[i];
                cur[i] = v;
                c += v;
            }
            if !(c > 0.0 && c.is_finite()) {
                return None;
            }
            ws.scale[0] = c;
            scale_product *= c;
            let inv = 1.0 / c;
            cur.iter_mut().for_each(|x| *x *= inv);
        }
        for t in 1..t_len {
            let (prev, cur) = ws.alpha.split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..t * n];
            let cur = &mut cur[..n];
            cur.fill(0.0);
            for i in 0..n {
                let p = prev[i];
                let row = &a[i * n..(i + 1) * n];
                for j in 0..n {
                    cur[j] += p * row[j];
                }
            }
            let e = &ws.emit_t[seq[t] * n..(seq[t] + 1) * n];
            let mut c = 0.0;
            for j in 0..n {
                cur[j] *= e[j];
                c += cur[j];
            }
            if !(c > 0.0 && c.is_finite()) {
                return None;
            }
            ws.scale[t] = c;
            scale_product *= c;
            if scale_product < 1e-250 {
                total += scale_product.ln();
                scale_product = 1.0;
            }
            let inv = 1.0 / c;
            cur.iter_mut().for_each(|x| *x *= inv);
        }
        total += scale_product.ln();

        // Backward pass fused with accumulation. `beta` holds beta_hat at t+1.
        let beta = &mut ws.beta[..n];
        let beta_next = &mut ws.beta_next[..n];
        let w = &mut ws.w[..n];
        beta.fill(1.0);
        {
            let last = &ws.alpha[(t_len - 1) * n..t_len * n];
            let o = seq[t_len - 1];
            for i in 0..n {
                counts.emission[i * m + o] += last[i];
            }
        }
        for t in (0..t_len - 1).rev() {
            let o_next = seq[t + 1];
            let e = &ws.emit_t[o_next * n..(o_next + 1) * n];
            let inv = 1.0 / ws.scale[t + 1];
            for j in 0..n {
                w[j] = e[j] * beta[j] * inv;
            }
            let alpha_t = &ws.alpha[t * n..(t + 1) * n];
            for i in 0..n {
                let row = &a[i * n..(i + 1) * n];
                let tp = &mut counts.trans_partial[i * n..(i + 1) * n];
                let ai = alpha_t[i];
                let mut b = 0.0;
                for j in 0..n {
                    b += row[j] * w[j];
                    tp[j] += ai * w[j];
                }
                beta_next[i] = b;
            }
            beta.copy_from_slice(beta_next);
            let o = seq[t];
            for i in 0..n {
                counts.emission[i * m + o] += alpha_t[i] * beta[i];
            }
        }
        for i in 0..n {
            counts.initial[i] += ws.alpha[i] * beta[i];
        }
    }
    Some(total)
}

fn normalize_into(dst: &mut [f64], counts: &[f64], pseudo: f64) {
    let total: f64 = counts.iter().sum::<f64>() + pseudo * counts.len() as f64;
    if total > 0.0 {
        for (d, &c) in dst.iter_mut().zip(counts) {
            *d = (c + pseudo) / total;
        }
    }
    // Zero row with no smoothing: the parameters do not affect the
    // likelihood, keep the previous row.
}

fn m_step(model: &mut CategoricalHmm, counts: &Counts, smoothing: f64) {
    let n = model.n_states();
    let m = model.n_symbols();
    normalize_into(&mut model.initial, &counts.initial, smoothing);
    let mut trans_counts = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            trans_counts[j] = counts.trans_partial[i * n + j] * model.transition[i * n + j];
        }
        normalize_into(
            &mut model.transition[i * n..(i + 1) * n],
            &trans_counts,
            smoothing,
        );
    }
    for i in 0..n {
        normalize_into(
            &mut model.emission[i * m..(i + 1) * m],
            &counts.emission[i * m..(i + 1) * m],
            smoothing,
        );
    }
}

/// One EM run from the initialization drawn for `(master_seed, n_states, restart)`.
pub fn fit_single_run(
    obs: &[Vec<usize>],
    alphabet: &Alphabet,
    n_states: usize,
    master_seed: u64,
    restart: usize,
    options: &FitOptions,
) -> Result<RunOutcome> {
    let seed_path = [n_states as u64, restart as u64];
    let mut rng = rng_for(master_seed, &seed_path);
    let mut model = random_init(&mut rng, alphabet, n_states);
    let n = n_states;
    let m = alphabet.len();
    let max_len = obs.iter().map(Vec::len).max().unwrap_or(0);
    let mut ws = Workspace::new(n, m, max_len);
    let mut counts = Counts {
        initial: vec![0.0; n],
        trans_partial: vec![0.0; n * n],
        emission: vec![0.0; n * m],
    };

    let mut ll_trace = Vec::new();
    let mut row_error_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let ll = e_step(&model, obs, &mut ws, &mut counts)
            .filter(|ll| ll.is_finite())
            .ok_or_else(|| Error::Fit(format!("restart {restart}: non-finite log-likelihood")))?;
        let improved = ll_trace.last().map(|&prev| ll - prev);
        ll_trace.push(ll);
        if improved.is_some_and(|d| d < options.tol) {
            converged = true;
            break;
        }
        if iterations == options.max_iter {
            break;
        }
        m_step(&mut model, &counts, options.smoothing);
        let err = model.max_row_sum_error();
        row_error_trace.push(err);
        if err > super::STOCHASTIC_TOL {
            return Err(Error::Fit(format!(
                "restart {restart}: M-step broke row-stochasticity ({err:e})"
            )));
        }
        iterations += 1;
    }
    Ok(RunOutcome {
        seed_path,
        log_likelihood: *ll_trace.last().expect("at least one E-step"),
        model,
        n_iterations: iterations,
        converged,
        ll_trace,
        row_error_trace,
    })
}

/// Fit an `n_states` model to encoded sequences, keeping the restart with the
/// highest log-likelihood (ties: lowest restart index).
pub fn fit_encoded(
    obs: &[Vec<usize>],
    alphabet: &Alphabet,
    n_states: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    if n_states == 0 {
        return Err(Error::validation("n_states", "must be at least 1"));
    }
    let total_symbols: usize = obs.iter().map(Vec::len).sum();
    if total_symbols == 0 {
        return Err(Error::InvalidArgument("no observations to fit".into()));
    }
    let m = alphabet.len();
    if let Some((learner, idx)) = obs
        .iter()
        .enumerate()
        .find_map(|(s, o)| o.iter().position(|&x| x >= m).map(|i| (s, i)))
    {
        return Err(Error::UnknownSymbol {
            learner_id: format!("#{learner}"),
            index: idx,
            symbol: obs[learner][idx].to_string(),
        });
    }
    let mut warnings = Vec::new();
    if n_states > total_symbols {
        let msg = format!("{n_states} states exceed the {total_symbols} observed symbols");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let runs: Vec<Result<RunOutcome>> = (0..options.restarts)
        .into_par_iter()
        .map(|r| fit_single_run(obs, alphabet, n_states, seed, r, options))
        .collect();

    let mut best: Option<(usize, RunOutcome)> = None;
    let mut summaries = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                summaries.push(RestartSummary {
                    restart: r,
                    log_likelihood: Some(run.log_likelihood),
                    n_iterations: run.n_iterations,
                    converged: run.converged,
                    discarded: None,
                });
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| run.log_likelihood > b.log_likelihood)
                {
                    best = Some((r, run));
                }
            }
            Err(e) => {
                log::warn!("restart {r} discarded: {e}");
                summaries.push(RestartSummary {
                    restart: r,
                    log_likelihood: None,
                    n_iterations: 0,
                    converged: false,
                    discarded: Some(e.to_string()),
                });
            }
        }
    }
    let (restart_index, run) =
        best.ok_or_else(|| Error::Fit(format!("all {} restarts discarded", options.restarts)))?;
    Ok(FitResult {
        model: run.model,
        log_likelihood: run.log_likelihood,
        n_iterations: run.n_iterations,
        converged: run.converged,
        restart_index,
        ll_trace: run.ll_trace,
        row_error_trace: run.row_error_trace,
        restarts: summaries,
        warnings,
    })
}

pub fn fit(
    sequences: &[ProcessSequence],
    alphabet: &Alphabet,
    n_states: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<FitResult> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("no sequences to fit".into()));
    }
    let obs = alphabet.encode_all(sequences)?;
    fit_encoded(&obs, alphabet, n_states, seed, options)
}
