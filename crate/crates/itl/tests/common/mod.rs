//! Test-only oracles: finite-horizon dynamic programming and fixed-point
//! iteration, written independently of the library's linear-algebra paths so
//! the two implementations can check each other.

use itl::mdp::{Policy, TabularMdp};
use itl::Stream;
use ndarray::{Array1, Array2, Array3};
use rand::Rng;

/// Expected immediate reward and expected next-state distribution under a
/// fixed policy, computed entry by entry.
fn policy_step(
    mdp: &TabularMdp,
    policy: &Policy,
    values: &Array1<f64>,
) -> Array1<f64> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut out = Array1::zeros(n);
    for s in 0..n {
        let mut total = 0.0;
        for a in 0..m {
            let p = policy.prob(s, a);
            if p == 0.0 {
                continue;
            }
            let mut next = 0.0;
            for s2 in 0..n {
                next += mdp.transition_row(s, a)[s2] * values[s2];
            }
            total += p * (mdp.reward(s, a) + mdp.discount() * next);
        }
        out[s] = total;
    }
    out
}

/// Fixed-point iteration for the policy's values, run until the sup-norm
/// update falls below `tol`.
pub fn iterative_policy_values(
    mdp: &TabularMdp,
    policy: &Policy,
    tol: f64,
    max_iters: usize,
) -> Array1<f64> {
    let mut values = Array1::zeros(mdp.n_states());
    for _ in 0..max_iters {
        let next = policy_step(mdp, policy, &values);
        let delta = values
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        values = next;
        if delta <= tol {
            return values;
        }
    }
    panic!("iterative policy evaluation did not reach tol {tol} in {max_iters} iterations");
}

/// Backward-induction optimal values over exactly `horizon` steps.
pub fn dp_optimal_values(mdp: &TabularMdp, horizon: usize) -> Array1<f64> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut values = Array1::<f64>::zeros(n);
    for _ in 0..horizon {
        let mut next = Array1::zeros(n);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m {
                let mut q = mdp.reward(s, a);
                for s2 in 0..n {
                    q += mdp.discount() * mdp.transition_row(s, a)[s2] * values[s2];
                }
                best = best.max(q);
            }
            next[s] = best;
        }
        values = next;
    }
    values
}

/// Action values of `values` one Bellman application later, entry by entry.
pub fn q_from_values(mdp: &TabularMdp, values: &Array1<f64>) -> Array2<f64> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut q = Array2::zeros((n, m));
    for s in 0..n {
        for a in 0..m {
            let mut next = 0.0;
            for s2 in 0..n {
                next += mdp.transition_row(s, a)[s2] * values[s2];
            }
            q[[s, a]] = mdp.reward(s, a) + mdp.discount() * next;
        }
    }
    q
}

/// A random valid environment: 2 to 20 states (the last one terminal),
/// 2 to 6 actions, uniform-simplex transition rows, rewards in [0, 10),
/// discount in [0.80, 0.99].
pub fn random_mdp(rng: &mut Stream) -> TabularMdp {
    let n = rng.gen_range(2..=20usize);
    let m = rng.gen_range(2..=6usize);
    let terminal = n - 1;
    let mut transitions = Array3::zeros((n, m, n));
    let mut rewards = Array2::zeros((n, m));
    for s in 0..n {
        for a in 0..m {
            if s == terminal {
                transitions[[s, a, s]] = 1.0;
                continue;
            }
            // Exponential spacings normalize to a uniform simplex point.
            let draws: Vec<f64> = (0..n).map(|_| -f64::ln(1.0 - rng.gen::<f64>())).collect();
            let total: f64 = draws.iter().sum();
            for (s2, d) in draws.iter().enumerate() {
                transitions[[s, a, s2]] = d / total;
            }
            rewards[[s, a]] = rng.gen_range(0.0..10.0);
        }
    }
    let discount = rng.gen_range(0.80..0.99);
    TabularMdp::new(transitions, rewards, discount, terminal).expect("constructed rows are valid")
}

/// A random stochastic policy with uniform-simplex rows.
pub fn random_policy(rng: &mut Stream, n_states: usize, n_actions: usize) -> Policy {
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let draws: Vec<f64> = (0..n_actions).map(|_| -f64::ln(1.0 - rng.gen::<f64>())).collect();
        let total: f64 = draws.iter().sum();
        for (a, d) in draws.iter().enumerate() {
            probs[[s, a]] = d / total;
        }
    }
    Policy::new(probs).expect("normalized rows are valid")
}
