//! Batch rollouts of an expert policy and the count statistics they induce.
//!
//! Episodes start uniformly at random among the decision states, follow the
//! expert, and stop on reaching the terminal state or after `horizon` steps.
//! The `(s, a, s')` counts are always recomputed from the raw steps — they
//! are derived data, never an independent input.

use ndarray::{Array2, Array3, ArrayView1};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::Stream;

/// Default episode truncation length.
pub const DEFAULT_HORIZON: usize = 20;

/// One expert interaction: took `action` in `state`, collected `reward`,
/// landed in `next_state`.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// One episode; consecutive steps chain (`steps[i].next_state ==
/// steps[i + 1].state`) and the episode ends at the terminal state or at the
/// horizon cap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// A set of trajectories plus the statistics every downstream consumer needs:
/// exact `(s, a, s')` visit counts and the mask of `(s, a)` pairs with data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub trajectories: Vec<Trajectory>,
    pub counts: Array3<u64>,
    pub visit_mask: Array2<bool>,
    pub terminal: usize,
}

impl TrajectoryBatch {
    /// Builds a batch from raw trajectories, recomputing counts and mask.
    pub fn from_trajectories(
        trajectories: Vec<Trajectory>,
        n_states: usize,
        n_actions: usize,
        terminal: usize,
    ) -> Result<Self> {
        if terminal >= n_states {
            return Err(Error::contract(format!(
                "terminal index {terminal} out of range for {n_states} states"
            )));
        }
        let counts = counts_from_trajectories(&trajectories, n_states, n_actions)?;
        let visit_mask = visit_mask_from_counts(&counts);
        Ok(TrajectoryBatch { trajectories, counts, visit_mask, terminal })
    }

    pub fn n_states(&self) -> usize {
        self.counts.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.counts.dim().1
    }

    pub fn n_episodes(&self) -> usize {
        self.trajectories.len()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

/// Tallies `(s, a, s')` occurrences over every step of every trajectory.
pub fn counts_from_trajectories(
    trajectories: &[Trajectory],
    n_states: usize,
    n_actions: usize,
) -> Result<Array3<u64>> {
    let mut counts = Array3::zeros((n_states, n_actions, n_states));
    for (t, trajectory) in trajectories.iter().enumerate() {
        for step in &trajectory.steps {
            if step.state >= n_states || step.next_state >= n_states || step.action >= n_actions {
                return Err(Error::contract(format!(
                    "trajectory {t} has out-of-range step ({}, {}, {})",
                    step.state, step.action, step.next_state
                )));
            }
            counts[[step.state, step.action, step.next_state]] += 1;
        }
    }
    Ok(counts)
}

/// `(s, a)` pairs with at least one observation.
pub fn visit_mask_from_counts(counts: &Array3<u64>) -> Array2<bool> {
    let (n, m, _) = counts.dim();
    Array2::from_shape_fn((n, m), |(s, a)| {
        (0..n).any(|sp| counts[[s, a, sp]] > 0)
    })
}

/// Rolls out `episodes` expert episodes, deterministically in `seed`.
///
/// Each episode draws a uniform start among decision states, then repeatedly
/// samples an expert action and a true-environment successor until the
/// terminal state is reached or `horizon` steps have been taken. Per-episode
/// randomness comes from one shared stream, so the whole batch is a pure
/// function of `(mdp, expert, episodes, horizon, seed)`.
pub fn rollout_batch(
    mdp: &TabularMdp,
    expert: &Policy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    if episodes == 0 {
        return Err(Error::contract("episodes must be at least 1"));
    }
    if horizon == 0 {
        return Err(Error::contract("horizon must be at least 1"));
    }
    if expert.n_states() != mdp.n_states() || expert.n_actions() != mdp.n_actions() {
        return Err(Error::contract(format!(
            "expert shape ({}, {}) does not match MDP shape ({}, {})",
            expert.n_states(),
            expert.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let starts: Vec<usize> = mdp.decision_states().collect();
    let mut rng = Stream::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = starts[rng.gen_range(0..starts.len())];
        let mut steps = Vec::new();
        for _ in 0..horizon {
            let action = sample_categorical(&expert.probs().row(state), &mut rng);
            let next_state = sample_categorical(&mdp.transition_row(state, action), &mut rng);
            steps.push(Step {
                state,
                action,
                reward: mdp.reward(state, action),
                next_state,
            });
            state = next_state;
            if state == mdp.terminal() {
                break;
            }
        }
        trajectories.push(Trajectory { steps });
    }
    TrajectoryBatch::from_trajectories(
        trajectories,
        mdp.n_states(),
        mdp.n_actions(),
        mdp.terminal(),
    )
}

/// Inverse-CDF draw from a probability row. Consumes exactly one uniform, so
/// the stream layout stays stable. Falls back to the last positive entry if
/// rounding leaves the cumulative sum fractionally short of the draw.
fn sample_categorical(row: &ArrayView1<'_, f64>, rng: &mut Stream) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

/// Validates the structural invariants of a trajectory against an
/// environment shape: indices in range, steps chained, never acting from the
/// terminal state, and ending either at terminal or at the cap.
pub fn validate_trajectory(
    trajectory: &Trajectory,
    n_states: usize,
    n_actions: usize,
    terminal: usize,
    horizon: usize,
) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if trajectory.len() > horizon {
        return Err(Error::invalid(format!(
            "trajectory has {} steps, horizon is {horizon}",
            trajectory.len()
        )));
    }
    for (i, step) in trajectory.steps.iter().enumerate() {
        if step.state >= n_states || step.next_state >= n_states || step.action >= n_actions {
            return Err(Error::invalid(format!("step {i} has out-of-range indices")));
        }
        if step.state == terminal {
            return Err(Error::invalid(format!("step {i} acts from the terminal state")));
        }
        if !step.reward.is_finite() {
            return Err(Error::invalid(format!("step {i} has non-finite reward")));
        }
        if i + 1 < trajectory.len() && step.next_state != trajectory.steps[i + 1].state {
            return Err(Error::invalid(format!(
                "steps {i} and {} do not chain",
                i + 1
            )));
        }
    }
    let last = trajectory.steps.last().expect("non-empty");
    if last.next_state != terminal && trajectory.len() != horizon {
        return Err(Error::invalid(
            "trajectory ends before the horizon without reaching the terminal state",
        ));
    }
    Ok(())
}
