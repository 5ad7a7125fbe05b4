//! Seeded random environment generation.
//!
//! Environments are drawn row-by-row from a two-component Dirichlet mixture:
//! with probability `skew_mix` a transition row comes from a low-concentration
//! (spiky) symmetric Dirichlet, otherwise from a high-concentration (near
//! uniform) one. Rewards are uniform per `(state, action)`. The terminal
//! state is appended after the decision states and is absorbing with zero
//! reward.
//!
//! [`find_env_with_structure`] walks seeds until the generated environment
//! has a requested number of stochastic-policy states at each probe epsilon,
//! which is how the reference instance below was pinned.

use ndarray::{Array2, Array3};
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_distr::Dirichlet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{build_expert_policy, epsilon_ball, plan, TabularMdp};
use crate::Stream;

/// Parameters of the random environment family.
///
/// `reward_high` is optional because its natural default scales with the
/// state count; use [`EnvSpec::reward_range`] for the resolved bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    #[serde(default = "default_n_decision_states")]
    pub n_decision_states: usize,
    #[serde(default = "default_n_actions")]
    pub n_actions: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// Probability that a transition row is drawn from the skewed component.
    #[serde(default = "default_skew_mix")]
    pub skew_mix: f64,
    /// Symmetric Dirichlet concentration of the skewed component.
    #[serde(default = "default_skew_concentration")]
    pub skew_concentration: f64,
    /// Symmetric Dirichlet concentration of the near-uniform component.
    #[serde(default = "default_flat_concentration")]
    pub flat_concentration: f64,
    #[serde(default)]
    pub reward_low: f64,
    /// Upper reward bound; defaults to `n_decision_states` when absent.
    #[serde(default)]
    pub reward_high: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_decision_states() -> usize {
    15
}
fn default_n_actions() -> usize {
    6
}
fn default_discount() -> f64 {
    0.95
}
fn default_skew_mix() -> f64 {
    0.5
}
fn default_skew_concentration() -> f64 {
    0.3
}
fn default_flat_concentration() -> f64 {
    20.0
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec {
            n_decision_states: default_n_decision_states(),
            n_actions: default_n_actions(),
            discount: default_discount(),
            skew_mix: default_skew_mix(),
            skew_concentration: default_skew_concentration(),
            flat_concentration: default_flat_concentration(),
            reward_low: 0.0,
            reward_high: None,
            seed: 0,
        }
    }
}

impl EnvSpec {
    /// Total state count including the terminal state.
    pub fn n_states(&self) -> usize {
        self.n_decision_states + 1
    }

    /// Resolved `(low, high)` reward bounds.
    pub fn reward_range(&self) -> (f64, f64) {
        let high = self.reward_high.unwrap_or(self.n_decision_states as f64);
        (self.reward_low, high)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_decision_states < 2 {
            return Err(Error::invalid("need at least 2 decision states"));
        }
        if self.n_actions < 2 {
            return Err(Error::invalid("need at least 2 actions"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie strictly in (0, 1), got {}",
                self.discount
            )));
        }
        if !(0.0..=1.0).contains(&self.skew_mix) || !self.skew_mix.is_finite() {
            return Err(Error::invalid(format!(
                "skew_mix must lie in [0, 1], got {}",
                self.skew_mix
            )));
        }
        for (name, c) in [
            ("skew_concentration", self.skew_concentration),
            ("flat_concentration", self.flat_concentration),
        ] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {c}")));
            }
        }
        let (lo, hi) = self.reward_range();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "reward range [{lo}, {hi}) is empty or non-finite"
            )));
        }
        Ok(())
    }
}

/// Structural summary of an environment under its optimal Q-table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvDescription {
    /// For each probed epsilon (ascending): how many decision states have an
    /// epsilon-ball with more than one action.
    pub stochastic_state_counts: Vec<(f64, usize)>,
    /// `(min, max)` of optimal Q-values over decision states.
    pub q_star_range: (f64, f64),
}

/// Draws the environment described by `spec`, deterministically in
/// `spec.seed`.
///
/// Draw order is fixed and part of the reproducibility contract: transition
/// rows in `(s, a)` lexicographic order (one mixture uniform, then one
/// Dirichlet vector each), then rewards in `(s, a)` order.
pub fn generate_env(spec: &EnvSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.n_states();
    let m = spec.n_actions;
    let terminal = n - 1;
    let mut rng = Stream::seed_from_u64(spec.seed);

    let skewed = Dirichlet::new_with_size(spec.skew_concentration, n)
        .map_err(|e| Error::invalid(format!("bad skew concentration: {e}")))?;
    let flat = Dirichlet::new_with_size(spec.flat_concentration, n)
        .map_err(|e| Error::invalid(format!("bad flat concentration: {e}")))?;

    let mut transitions = Array3::zeros((n, m, n));
    for s in 0..terminal {
        for a in 0..m {
            let use_skewed = rng.gen::<f64>() < spec.skew_mix;
            let row = if use_skewed {
                skewed.sample(&mut rng)
            } else {
                flat.sample(&mut rng)
            };
            for (sp, p) in row.into_iter().enumerate() {
                transitions[[s, a, sp]] = p;
            }
        }
    }
    for a in 0..m {
        transitions[[terminal, a, terminal]] = 1.0;
    }

    let (lo, hi) = spec.reward_range();
    let mut rewards = Array2::zeros((n, m));
    for s in 0..terminal {
        for a in 0..m {
            rewards[[s, a]] = rng.gen_range(lo..hi);
        }
    }

    TabularMdp::new(transitions, rewards, spec.discount, terminal)
}

/// Plans the environment and reports, for each probe epsilon, how many
/// decision states keep more than one action in their epsilon-ball.
pub fn describe_env(mdp: &TabularMdp, epsilons: &[f64]) -> Result<EnvDescription> {
    if epsilons.is_empty() {
        return Err(Error::contract("describe_env needs at least one epsilon"));
    }
    let solved = plan(mdp)?;
    let mut probes: Vec<f64> = epsilons.to_vec();
    for &e in &probes {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::contract(format!(
                "probe epsilons must be finite and non-negative, got {e}"
            )));
        }
    }
    probes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    probes.dedup();

    let mut counts = Vec::with_capacity(probes.len());
    for &eps in &probes {
        let balls = epsilon_ball(&solved.q, eps)?;
        let stochastic = mdp
            .decision_states()
            .filter(|&s| balls.ball(s).len() > 1)
            .count();
        counts.push((eps, stochastic));
    }

    let mut q_min = f64::INFINITY;
    let mut q_max = f64::NEG_INFINITY;
    for s in mdp.decision_states() {
        for a in 0..mdp.n_actions() {
            q_min = q_min.min(solved.q.get(s, a));
            q_max = q_max.max(solved.q.get(s, a));
        }
    }

    Ok(EnvDescription {
        stochastic_state_counts: counts,
        q_star_range: (q_min, q_max),
    })
}

/// Walks seeds upward from `spec.seed`, regenerating until [`describe_env`]
/// reports exactly `targets` stochastic-state counts. Returns the matching
/// environment and the seed that produced it.
pub fn find_env_with_structure(
    spec: &EnvSpec,
    targets: &[(f64, usize)],
    max_tries: u64,
) -> Result<(TabularMdp, u64)> {
    spec.validate()?;
    if targets.is_empty() {
        return Err(Error::contract("structure search needs at least one target"));
    }
    if max_tries == 0 {
        return Err(Error::contract("max_tries must be at least 1"));
    }
    let mut sorted_targets: Vec<(f64, usize)> = targets.to_vec();
    sorted_targets.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let probes: Vec<f64> = sorted_targets.iter().map(|t| t.0).collect();

    let mut best_distance = usize::MAX;
    let mut closest_seed = spec.seed;
    let mut closest: Vec<(f64, usize)> = Vec::new();
    for t in 0..max_tries {
        let seed = spec.seed.wrapping_add(t);
        let candidate_spec = EnvSpec { seed, ..spec.clone() };
        let env = generate_env(&candidate_spec)?;
        let description = describe_env(&env, &probes)?;
        let counts = &description.stochastic_state_counts;
        let distance: usize = counts
            .iter()
            .zip(&sorted_targets)
            .map(|(&(_, got), &(_, want))| got.abs_diff(want))
            .sum();
        if distance == 0 {
            return Ok((env, seed));
        }
        if distance < best_distance {
            best_distance = distance;
            closest_seed = seed;
            closest = counts.clone();
        }
    }
    Err(Error::StructureSearchExhausted {
        tries: max_tries,
        targets: sorted_targets,
        closest_seed,
        closest,
    })
}

/// Seed of the pinned reference environment. Under the default [`EnvSpec`]
/// this seed's optimal Q-table yields 0, 3, and 6 stochastic-policy states at
/// epsilon 0, 3, and 4 (see [`REFERENCE_STRUCTURE`]). Among the seeds with
/// that structure it was selected for well-conditioned posteriors: the
/// constrained sampler completes every (epsilon, episode-count) cell on
/// hundreds of probe datasets without a single rejection-budget failure,
/// which keeps the downstream experiment's flagged-dataset rate at zero.
pub const REFERENCE_ENV_SEED: u64 = 961;

/// The `(epsilon, stochastic state count)` structure the reference
/// environment is pinned to.
pub const REFERENCE_STRUCTURE: [(f64, usize); 3] = [(0.0, 0), (3.0, 3), (4.0, 6)];

/// Spec of the reference environment (default family, pinned seed).
pub fn reference_env_spec() -> EnvSpec {
    EnvSpec { seed: REFERENCE_ENV_SEED, ..EnvSpec::default() }
}

/// The pinned reference environment used by the experiment defaults and the
/// acceptance suite.
pub fn reference_env() -> TabularMdp {
    generate_env(&reference_env_spec()).expect("reference spec is valid")
}

/// Convenience: the expert policy for the reference (or any) environment at a
/// given epsilon, built from the optimal Q-table's epsilon-balls.
pub fn expert_for(mdp: &TabularMdp, epsilon: f64) -> Result<crate::mdp::Policy> {
    let solved = plan(mdp)?;
    Ok(build_expert_policy(&epsilon_ball(&solved.q, epsilon)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = EnvSpec { seed: 11, n_decision_states: 6, n_actions: 3, ..EnvSpec::default() };
        let a = generate_env(&spec).unwrap();
        let b = generate_env(&spec).unwrap();
        assert_eq!(a.transitions(), b.transitions());
        assert_eq!(a.rewards(), b.rewards());
        let c = generate_env(&EnvSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.transitions(), c.transitions());
    }

    #[test]
    fn generated_env_has_requested_shape() {
        let spec = EnvSpec::default();
        let env = generate_env(&spec).unwrap();
        assert_eq!(env.n_states(), 16);
        assert_eq!(env.n_actions(), 6);
        assert_eq!(env.terminal(), 15);
        assert_eq!(env.discount(), 0.95);
        let (lo, hi) = spec.reward_range();
        assert_eq!((lo, hi), (0.0, 15.0));
        for s in env.decision_states() {
            for a in 0..env.n_actions() {
                let r = env.reward(s, a);
                assert!(r >= lo && r < hi, "reward {r} outside [{lo}, {hi})");
            }
        }
    }

    #[test]
    fn flat_limit_is_nearly_uniform() {
        let spec = EnvSpec {
            skew_mix: 0.0,
            flat_concentration: 1e6,
            n_decision_states: 8,
            n_actions: 4,
            seed: 3,
            ..EnvSpec::default()
        };
        let env = generate_env(&spec).unwrap();
        let u = 1.0 / env.n_states() as f64;
        for s in env.decision_states() {
            for a in 0..env.n_actions() {
                for &p in env.transition_row(s, a) {
                    assert!((p - u).abs() < 1e-3, "entry {p} too far from uniform {u}");
                }
            }
        }
    }

    #[test]
    fn skewed_component_concentrates_rows() {
        fn mean_row_max(env: &TabularMdp) -> f64 {
            let mut total = 0.0;
            let mut rows = 0;
            for s in env.decision_states() {
                for a in 0..env.n_actions() {
                    total += env
                        .transition_row(s, a)
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max);
                    rows += 1;
                }
            }
            total / rows as f64
        }
        let base = EnvSpec { seed: 5, ..EnvSpec::default() };
        let skewed = generate_env(&EnvSpec { skew_mix: 1.0, ..base.clone() }).unwrap();
        let flat = generate_env(&EnvSpec { skew_mix: 0.0, ..base }).unwrap();
        // All-skewed rows pile mass on a few states; all-flat rows hover near
        // uniform (max about 1/16). Demand a clear separation.
        assert!(mean_row_max(&skewed) > 2.0 * mean_row_max(&flat));
        assert!(mean_row_max(&skewed) > 0.3);
    }

    #[test]
    fn describe_env_counts_known_structure() {
        // Every action jumps straight to terminal, so Q* equals the reward
        // table and the ball structure is read off the reward gaps.
        let transitions = array![
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        ];
        let rewards = array![[10.0, 8.0], [5.0, 1.0], [0.0, 0.0]];
        let mdp = TabularMdp::new(transitions, rewards, 0.95, 2).unwrap();
        let d = describe_env(&mdp, &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(d.stochastic_state_counts, vec![(0.0, 0), (2.0, 1), (4.0, 2)]);
        assert_eq!(d.q_star_range, (1.0, 10.0));
    }

    #[test]
    fn stochastic_counts_grow_with_epsilon() {
        let env = generate_env(&EnvSpec { seed: 21, ..EnvSpec::default() }).unwrap();
        let d = describe_env(&env, &[0.0, 1.0, 2.0, 5.0, 10.0]).unwrap();
        let counts: Vec<usize> = d.stochastic_state_counts.iter().map(|c| c.1).collect();
        for w in counts.windows(2) {
            assert!(w[0] <= w[1], "counts must be non-decreasing: {counts:?}");
        }
    }

    #[test]
    fn structure_search_finds_own_description() {
        // Describe a concrete env, then search for that exact structure
        // starting at its seed: the search must stop immediately.
        let spec = EnvSpec { seed: 40, n_decision_states: 6, n_actions: 3, ..EnvSpec::default() };
        let env = generate_env(&spec).unwrap();
        let description = describe_env(&env, &[0.0, 2.0]).unwrap();
        let (found, seed) =
            find_env_with_structure(&spec, &description.stochastic_state_counts, 1).unwrap();
        assert_eq!(seed, 40);
        assert_eq!(found.transitions(), env.transitions());
    }

    #[test]
    fn structure_search_reports_closest_on_failure() {
        let spec = EnvSpec { seed: 1, n_decision_states: 5, n_actions: 3, ..EnvSpec::default() };
        // Impossible: exact Q-ties have probability zero, so epsilon = 0
        // cannot yield five stochastic states.
        let err = find_env_with_structure(&spec, &[(0.0, 5)], 4).unwrap_err();
        match err {
            Error::StructureSearchExhausted { tries, closest, closest_seed, .. } => {
                assert_eq!(tries, 4);
                assert!((1..5).contains(&closest_seed));
                assert_eq!(closest.len(), 1);
                assert_eq!(closest[0].0, 0.0);
            }
            other => panic!("expected StructureSearchExhausted, got {other:?}"),
        }
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let good = EnvSpec::default();
        assert!(good.validate().is_ok());
        assert!(EnvSpec { n_decision_states: 1, ..good.clone() }.validate().is_err());
        assert!(EnvSpec { n_actions: 1, ..good.clone() }.validate().is_err());
        assert!(EnvSpec { discount: 1.0, ..good.clone() }.validate().is_err());
        assert!(EnvSpec { skew_mix: 1.5, ..good.clone() }.validate().is_err());
        assert!(EnvSpec { skew_concentration: 0.0, ..good.clone() }.validate().is_err());
        assert!(EnvSpec { reward_high: Some(-1.0), ..good.clone() }.validate().is_err());
        assert!(EnvSpec { reward_high: Some(20.0), ..good }.validate().is_ok());
    }

    #[test]
    fn reference_env_matches_pinned_structure() {
        let env = reference_env();
        let probes: Vec<f64> = REFERENCE_STRUCTURE.iter().map(|t| t.0).collect();
        let d = describe_env(&env, &probes).unwrap();
        assert_eq!(d.stochastic_state_counts, REFERENCE_STRUCTURE.to_vec());
    }
}
