//! Tabular MDP types and exact planning operations.
//!
//! Everything here is dense and small-scale by design: states and actions are
//! plain indices, transitions live in an `(s, a, s')` tensor, and planning is
//! done either by a direct linear solve (policy evaluation) or by value
//! iteration (optimal values). One state is designated *terminal*: it is
//! absorbing, yields zero reward, and is excluded from every "decision state"
//! computation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Array3, ArrayView1};

use crate::error::{Error, Result};

/// Transition rows (and policy rows) must sum to one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Probability mass below this threshold counts as "action not taken".
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Slack added to epsilon when testing ball membership, so that actions
/// sitting exactly on the boundary are kept rather than dropped to floating
/// point noise.
pub const BALL_SLACK: f64 = 1e-9;

/// Maximum acceptable sup-norm residual of the policy-evaluation linear solve.
pub const EVAL_RESIDUAL_TOL: f64 = 1e-10;

/// Default sup-norm tolerance for value iteration.
pub const DEFAULT_VI_TOL: f64 = 1e-10;

/// Default iteration cap for value iteration.
pub const DEFAULT_VI_MAX_ITERS: usize = 100_000;

/// A finite MDP with dense transitions, per-(state, action) rewards, and a
/// single absorbing zero-reward terminal state.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `(s, a, s')` transition probabilities; every `(s, a)` row sums to 1.
    transitions: Array3<f64>,
    /// `(s, a)` immediate rewards; the terminal state's rewards are all zero.
    rewards: Array2<f64>,
    /// Discount factor, strictly inside `(0, 1)`.
    discount: f64,
    /// Index of the absorbing terminal state.
    terminal: usize,
}

impl TabularMdp {
    pub fn new(
        transitions: Array3<f64>,
        rewards: Array2<f64>,
        discount: f64,
        terminal: usize,
    ) -> Result<Self> {
        let (n, m, n2) = transitions.dim();
        if n < 2 || m < 1 {
            return Err(Error::invalid(format!(
                "need at least 2 states and 1 action, got {n} states, {m} actions"
            )));
        }
        if n2 != n {
            return Err(Error::invalid(format!(
                "transition tensor is ({n}, {m}, {n2}); last axis must match the first"
            )));
        }
        if rewards.dim() != (n, m) {
            return Err(Error::invalid(format!(
                "reward table is {:?}, expected ({n}, {m})",
                rewards.dim()
            )));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie strictly in (0, 1), got {discount}"
            )));
        }
        if terminal >= n {
            return Err(Error::invalid(format!(
                "terminal index {terminal} out of range for {n} states"
            )));
        }
        for s in 0..n {
            for a in 0..m {
                let row = transitions.slice(ndarray::s![s, a, ..]);
                let mut sum = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::invalid(format!(
                            "transition ({s}, {a}, {sp}) = {p} is not a probability"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::invalid(format!(
                        "transition row ({s}, {a}) sums to {sum}, not 1"
                    )));
                }
                if !rewards[[s, a]].is_finite() {
                    return Err(Error::invalid(format!("reward ({s}, {a}) is not finite")));
                }
            }
        }
        for a in 0..m {
            if (transitions[[terminal, a, terminal]] - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "terminal state {terminal} is not absorbing under action {a}"
                )));
            }
            if rewards[[terminal, a]].abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "terminal state {terminal} has nonzero reward under action {a}"
                )));
            }
        }
        Ok(TabularMdp {
            n_states: n,
            n_actions: m,
            transitions,
            rewards,
            discount,
            terminal,
        })
    }

    /// Same environment with a different transition tensor (re-validated).
    /// Used to plan against estimated dynamics: rewards, discount, and the
    /// terminal state are structural knowledge and stay fixed.
    pub fn with_transitions(&self, transitions: Array3<f64>) -> Result<Self> {
        TabularMdp::new(transitions, self.rewards.clone(), self.discount, self.terminal)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn transitions(&self) -> &Array3<f64> {
        &self.transitions
    }

    pub fn rewards(&self) -> &Array2<f64> {
        &self.rewards
    }

    pub fn transition_row(&self, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.transitions.slice(ndarray::s![s, a, ..])
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[[s, a]]
    }

    /// All non-terminal states, ascending.
    pub fn decision_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_states).filter(move |&s| s != self.terminal)
    }

    /// The one-hot absorbing row for the terminal state.
    pub fn absorbing_row(&self) -> Array1<f64> {
        let mut row = Array1::zeros(self.n_states);
        row[self.terminal] = 1.0;
        row
    }
}

/// A stochastic policy: `(s, a)` action probabilities, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Array2<f64>,
}

impl Policy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        let (n, m) = probs.dim();
        if n == 0 || m == 0 {
            return Err(Error::invalid("policy must have at least one state and action"));
        }
        for s in 0..n {
            let mut sum = 0.0;
            for a in 0..m {
                let p = probs[[s, a]];
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(format!(
                        "policy entry ({s}, {a}) = {p} is not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("policy row {s} sums to {sum}, not 1")));
            }
        }
        Ok(Policy { probs })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[[s, a]]
    }

    /// Actions with probability above [`SUPPORT_THRESHOLD`], ascending.
    pub fn support(&self, s: usize) -> Vec<usize> {
        (0..self.n_actions())
            .filter(|&a| self.probs[[s, a]] > SUPPORT_THRESHOLD)
            .collect()
    }

    pub fn is_supported(&self, s: usize, a: usize) -> bool {
        self.probs[[s, a]] > SUPPORT_THRESHOLD
    }

    /// Most probable action at `s`; ties go to the lowest action index.
    pub fn argmax(&self, s: usize) -> usize {
        argmax_row(&self.probs.row(s))
    }
}

/// State values indexed by state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(Array1<f64>);

impl ValueTable {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("value table contains non-finite entries"));
        }
        Ok(ValueTable(values))
    }

    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Action values, `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable(Array2<f64>);

impl QTable {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Q table contains non-finite entries"));
        }
        Ok(QTable(values))
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.0[[s, a]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n_states(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.0.ncols()
    }

    pub fn row_max(&self, s: usize) -> f64 {
        self.0.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Best action at `s`; ties go to the lowest action index.
    pub fn argmax(&self, s: usize) -> usize {
        argmax_row(&self.0.row(s))
    }
}

fn argmax_row(row: &ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (a, &v) in row.iter().enumerate() {
        if v > best_val {
            best = a;
            best_val = v;
        }
    }
    best
}

/// For each state, the set of actions whose Q-value is within `epsilon` of
/// the state's best Q-value (with [`BALL_SLACK`] of numerical slack).
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonBallMap {
    epsilon: f64,
    n_actions: usize,
    /// `balls[s]` is sorted ascending and never empty.
    balls: Vec<Vec<usize>>,
}

impl EpsilonBallMap {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_states(&self) -> usize {
        self.balls.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn ball(&self, s: usize) -> &[usize] {
        &self.balls[s]
    }

    pub fn contains(&self, s: usize, a: usize) -> bool {
        self.balls[s].binary_search(&a).is_ok()
    }
}

/// Whether the expert policy commits to a single action at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Deterministic,
    Stochastic,
}

/// Output of [`value_iteration`]: optimal values, their Q-table, and the
/// greedy action per state (lowest index on ties).
#[derive(Debug, Clone)]
pub struct Plan {
    pub values: ValueTable,
    pub q: QTable,
    pub greedy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

impl Plan {
    /// The greedy policy as a one-hot row per state.
    pub fn greedy_policy(&self) -> Policy {
        let n = self.q.n_states();
        let m = self.q.n_actions();
        let mut probs = Array2::zeros((n, m));
        for (s, &a) in self.greedy.iter().enumerate() {
            probs[[s, a]] = 1.0;
        }
        Policy::new(probs).expect("one-hot rows are valid by construction")
    }
}

/// Evaluates a stochastic policy exactly by solving the linear system
/// `(I - discount * T_pi) v = R_pi`, where `T_pi` and `R_pi` are the
/// policy-averaged transitions and rewards.
///
/// The solve is a partial-pivot LU (no explicit inverse) with one step of
/// iterative refinement; the result must leave a sup-norm residual of at most
/// [`EVAL_RESIDUAL_TOL`] or the call fails.
pub fn evaluate_policy_closed_form(mdp: &TabularMdp, policy: &Policy) -> Result<ValueTable> {
    check_policy_shape(mdp, policy)?;
    let (t_pi, r_pi) = policy_averaged(mdp, policy);
    solve_bellman_system(&t_pi, &r_pi, mdp.discount())
}

/// Policy-averaged transition matrix and reward vector:
/// `T_pi(s, s') = sum_a pi(a|s) T(s, a, s')`, `R_pi(s) = sum_a pi(a|s) R(s, a)`.
pub(crate) fn policy_averaged(mdp: &TabularMdp, policy: &Policy) -> (Array2<f64>, Array1<f64>) {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut t_pi = Array2::zeros((n, n));
    let mut r_pi = Array1::zeros(n);
    for s in 0..n {
        for a in 0..m {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward(s, a);
            let row = mdp.transition_row(s, a);
            for sp in 0..n {
                t_pi[[s, sp]] += w * row[sp];
            }
        }
    }
    (t_pi, r_pi)
}

/// Solves `(I - discount * t_pi) v = r_pi` for `v`.
pub(crate) fn solve_bellman_system(
    t_pi: &Array2<f64>,
    r_pi: &Array1<f64>,
    discount: f64,
) -> Result<ValueTable> {
    let n = r_pi.len();
    let a = DMatrix::from_fn(n, n, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        id - discount * t_pi[[r, c]]
    });
    let b = DVector::from_iterator(n, r_pi.iter().copied());
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::Numerics("singular policy-evaluation system".into()))?;
    let mut residual = (&b - &a * &x).amax();
    if residual > EVAL_RESIDUAL_TOL {
        // One step of iterative refinement before giving up.
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        residual = (&b - &a * &x).amax();
    }
    if residual > EVAL_RESIDUAL_TOL {
        return Err(Error::Numerics(format!(
            "policy-evaluation residual {residual:e} exceeds {EVAL_RESIDUAL_TOL:e}"
        )));
    }
    ValueTable::new(Array1::from_iter(x.iter().copied()))
}

/// One-step lookahead: `q(s, a) = R(s, a) + discount * T(s, a, .) . v`.
pub fn q_from_v(mdp: &TabularMdp, v: &ValueTable) -> Result<QTable> {
    if v.len() != mdp.n_states() {
        return Err(Error::contract(format!(
            "value table has {} states, MDP has {}",
            v.len(),
            mdp.n_states()
        )));
    }
    let q = q_from_values(mdp, v.values());
    QTable::new(q)
}

fn q_from_values(mdp: &TabularMdp, v: &Array1<f64>) -> Array2<f64> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let vs = v.as_slice().expect("standard layout");
    let ts = mdp.transitions.as_slice().expect("standard layout");
    let mut q = Array2::zeros((n, m));
    for s in 0..n {
        for a in 0..m {
            let row = &ts[(s * m + a) * n..(s * m + a + 1) * n];
            let mut dot = 0.0;
            for (p, vv) in row.iter().zip(vs) {
                dot += p * vv;
            }
            q[[s, a]] = mdp.rewards[[s, a]] + mdp.discount * dot;
        }
    }
    q
}

/// Computes optimal values by value iteration from `v = 0`.
///
/// Stops once the sup-norm change of a sweep is at most `tol` (the returned
/// values then carry a Bellman residual of at most `tol`); errors if
/// `max_iters` sweeps never get there. The returned Q-table is exactly the
/// one-step lookahead of the returned values, and `greedy` breaks ties toward
/// the lowest action index.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<Plan> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::contract(format!("tolerance must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::contract("max_iters must be at least 1"));
    }
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let ts = mdp.transitions.as_slice().expect("standard layout");
    let rs = mdp.rewards.as_slice().expect("standard layout");
    let mut v = vec![0.0f64; n];
    let mut v_next = vec![0.0f64; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iters {
        residual = 0.0f64;
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m {
                let row = &ts[(s * m + a) * n..(s * m + a + 1) * n];
                let mut dot = 0.0;
                for (p, vv) in row.iter().zip(v.iter()) {
                    dot += p * vv;
                }
                let q = rs[s * m + a] + mdp.discount * dot;
                if q > best {
                    best = q;
                }
            }
            residual = residual.max((best - v[s]).abs());
            v_next[s] = best;
        }
        std::mem::swap(&mut v, &mut v_next);
        if residual <= tol {
            let v = Array1::from_vec(v);
            let q = q_from_values(mdp, &v);
            let mut greedy = Vec::with_capacity(n);
            for s in 0..n {
                greedy.push(argmax_row(&q.row(s)));
            }
            return Ok(Plan {
                values: ValueTable::new(v)?,
                q: QTable::new(q)?,
                greedy,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}

/// [`value_iteration`] with the default tolerance and iteration cap.
pub fn plan(mdp: &TabularMdp) -> Result<Plan> {
    value_iteration(mdp, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITERS)
}

/// For every state, the actions within `epsilon` of the best Q-value:
/// `ball(s) = { a : max_a' q(s, a') - q(s, a) <= epsilon + BALL_SLACK }`.
pub fn epsilon_ball(q: &QTable, epsilon: f64) -> Result<EpsilonBallMap> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::contract(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    let n = q.n_states();
    let m = q.n_actions();
    let mut balls = Vec::with_capacity(n);
    for s in 0..n {
        let best = q.row_max(s);
        let members: Vec<usize> = (0..m)
            .filter(|&a| best - q.get(s, a) <= epsilon + BALL_SLACK)
            .collect();
        debug_assert!(!members.is_empty());
        balls.push(members);
    }
    Ok(EpsilonBallMap { epsilon, n_actions: m, balls })
}

/// The expert policy induced by an epsilon-ball map: at each state, uniform
/// over the ball's members and zero elsewhere.
pub fn build_expert_policy(balls: &EpsilonBallMap) -> Policy {
    let n = balls.n_states();
    let m = balls.n_actions();
    let mut probs = Array2::zeros((n, m));
    for s in 0..n {
        let members = balls.ball(s);
        let w = 1.0 / members.len() as f64;
        for &a in members {
            probs[[s, a]] = w;
        }
    }
    Policy::new(probs).expect("uniform ball rows are valid by construction")
}

/// Classifies every decision state by whether the policy commits to exactly
/// one action there (probability above [`SUPPORT_THRESHOLD`]). The terminal
/// state is left out of the map.
pub fn classify_states(policy: &Policy, terminal: usize) -> Result<BTreeMap<usize, StateKind>> {
    if terminal >= policy.n_states() {
        return Err(Error::contract(format!(
            "terminal index {terminal} out of range for {} states",
            policy.n_states()
        )));
    }
    let mut kinds = BTreeMap::new();
    for s in 0..policy.n_states() {
        if s == terminal {
            continue;
        }
        let kind = if policy.support(s).len() == 1 {
            StateKind::Deterministic
        } else {
            StateKind::Stochastic
        };
        kinds.insert(s, kind);
    }
    Ok(kinds)
}

fn check_policy_shape(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::contract(format!(
            "policy shape ({}, {}) does not match MDP shape ({}, {})",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}
