//! Fixtures shared by the benchmarks.

use tactic_core::hmm::CategoricalHmm;
use tactic_core::synth::{generate_cohort, CohortSpec};

/// `n` learners from the bundled cohort, without unrecognized events: the first
/// archetype's generator, learner ids and encoded sequences.
pub fn cohort(n: usize) -> (CategoricalHmm, Vec<String>, Vec<Vec<usize>>) {
    let mut spec = CohortSpec::paperlike();
    spec.n_learners = n;
    spec.unrecognized_rate = 0.0;
    let model = spec.archetypes[0].hmm.clone();
    let c = generate_cohort(&spec).expect("bundled spec is valid");
    let ids = c.learners.iter().map(|l| l.learner_id.clone()).collect();
    let obs = c.learners.into_iter().map(|l| l.symbols).collect();
    (model, ids, obs)
}
