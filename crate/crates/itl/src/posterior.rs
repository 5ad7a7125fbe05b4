//! Dirichlet posterior over transition rows, fit from batch counts.
//!
//! Each `(s, a)` row gets an independent Dirichlet with concentration
//! `counts + prior`; rows of the terminal state are structural (always the
//! absorbing row) and are never treated as uncertain.

use ndarray::{Array1, Array3};
use rand_distr::{Dirichlet, Distribution};

use crate::data::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::Stream;

/// Default symmetric prior concentration added to every count.
pub const DEFAULT_PRIOR: f64 = 1.0;

/// Per-row Dirichlet posterior over an environment's transition tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPosterior {
    alpha: Array3<f64>,
    terminal: usize,
}

/// Fits the posterior `alpha = counts + prior`, with the terminal state's
/// rows pinned to the absorbing row rather than estimated.
pub fn fit_posterior(counts: &Array3<f64>, prior: f64, terminal: usize) -> Result<DirichletPosterior> {
    let (n_states, _, n_next) = counts.dim();
    if n_states != n_next {
        return Err(Error::contract(format!(
            "counts tensor must be square in states, got {n_states} x {n_next}"
        )));
    }
    if terminal >= n_states {
        return Err(Error::contract(format!(
            "terminal index {terminal} out of range for {n_states} states"
        )));
    }
    if !(prior.is_finite() && prior > 0.0) {
        return Err(Error::contract(format!("prior must be positive and finite, got {prior}")));
    }
    if counts.iter().any(|&c| !c.is_finite() || c < 0.0) {
        return Err(Error::contract("counts must be finite and non-negative"));
    }
    Ok(DirichletPosterior { alpha: counts + prior, terminal })
}

impl DirichletPosterior {
    /// Fit from a rollout batch: `alpha = counts + prior`.
    pub fn from_batch(batch: &TrajectoryBatch, prior: f64) -> Result<Self> {
        let counts = batch.counts.mapv(|c| c as f64);
        fit_posterior(&counts, prior, batch.terminal)
    }

    pub fn n_states(&self) -> usize {
        self.alpha.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.alpha.dim().1
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn alpha(&self) -> &Array3<f64> {
        &self.alpha
    }

    fn absorbing_row(&self) -> Array1<f64> {
        let mut row = Array1::zeros(self.n_states());
        row[self.terminal] = 1.0;
        row
    }

    /// Posterior-mean row for `(s, a)`: `alpha / sum(alpha)`, except the
    /// terminal state which is always absorbing.
    pub fn mean_row(&self, state: usize, action: usize) -> Array1<f64> {
        if state == self.terminal {
            return self.absorbing_row();
        }
        let row = self.alpha.slice(ndarray::s![state, action, ..]);
        let total: f64 = row.sum();
        row.mapv(|a| a / total)
    }

    /// Full posterior-mean transition tensor.
    pub fn mean(&self) -> Array3<f64> {
        let (n, m, _) = self.alpha.dim();
        let mut out = Array3::zeros((n, m, n));
        for s in 0..n {
            for a in 0..m {
                out.slice_mut(ndarray::s![s, a, ..]).assign(&self.mean_row(s, a));
            }
        }
        out
    }

    /// Draws one row for `(s, a)` from its Dirichlet.
    ///
    /// Terminal rows return the absorbing row *without consuming any
    /// randomness*, so a stream positioned at row `(s, a)` sees the same
    /// draws whether or not terminal rows were requested in between.
    ///
    /// Sampling goes through `rand_distr::Dirichlet`, i.e. per-component
    /// `Gamma(alpha_i, 1)` draws normalized to a simplex point
    /// (Marsaglia–Tsang squeeze for shapes >= 1, with the `u^(1/alpha)`
    /// boost below 1).
    pub fn sample_row(&self, state: usize, action: usize, rng: &mut Stream) -> Result<Array1<f64>> {
        if state == self.terminal {
            return Ok(self.absorbing_row());
        }
        let alpha: Vec<f64> = self.alpha.slice(ndarray::s![state, action, ..]).to_vec();
        let dirichlet = Dirichlet::new(&alpha)
            .map_err(|e| Error::Numerics(format!("Dirichlet({alpha:?}) for ({state}, {action}): {e}")))?;
        Ok(Array1::from_vec(dirichlet.sample(rng)))
    }

    /// Draws a complete transition tensor, one row at a time in `(s, a)`
    /// lexicographic order. The result is a valid environment tensor:
    /// every row is a simplex point and the terminal rows are absorbing.
    pub fn sample_full(&self, rng: &mut Stream) -> Result<Array3<f64>> {
        let (n, m, _) = self.alpha.dim();
        let mut out = Array3::zeros((n, m, n));
        for s in 0..n {
            for a in 0..m {
                out.slice_mut(ndarray::s![s, a, ..]).assign(&self.sample_row(s, a, rng)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rollout_batch;
    use crate::mdp::{Policy, TabularMdp};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::SeedableRng;

    fn small_counts() -> Array3<f64> {
        let mut counts = Array3::zeros((3, 2, 3));
        counts[[0, 0, 0]] = 2.0;
        counts[[0, 0, 2]] = 1.0;
        counts
    }

    #[test]
    fn mean_is_normalized_alpha() {
        let post = fit_posterior(&small_counts(), 1.0, 2).unwrap();
        // alpha = [3, 1, 2] for the observed row.
        let row = post.mean_row(0, 0);
        assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(row[2], 1.0 / 3.0, epsilon = 1e-15);
        // A row with no data is uniform under the symmetric prior.
        let empty = post.mean_row(1, 1);
        for &p in empty.iter() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn terminal_rows_are_structural() {
        let post = fit_posterior(&small_counts(), 1.0, 2).unwrap();
        let mean = post.mean();
        let mut rng = Stream::seed_from_u64(0);
        for a in 0..2 {
            assert_eq!(post.mean_row(2, a), array![0.0, 0.0, 1.0]);
            assert_eq!(mean.slice(ndarray::s![2, a, ..]), array![0.0, 0.0, 1.0]);
            let draw = post.sample_row(2, a, &mut rng).unwrap();
            assert_eq!(draw, array![0.0, 0.0, 1.0]);
        }
        // Terminal draws consumed nothing: the next draw equals the first
        // draw of a fresh stream.
        let next = post.sample_row(0, 0, &mut rng).unwrap();
        let fresh = post
            .sample_row(0, 0, &mut Stream::seed_from_u64(0))
            .unwrap();
        assert_eq!(next, fresh);
    }

    #[test]
    fn sampling_is_deterministic_and_simplex_valued() {
        let post = fit_posterior(&small_counts(), 1.0, 2).unwrap();
        let a = post.sample_full(&mut Stream::seed_from_u64(11)).unwrap();
        let b = post.sample_full(&mut Stream::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        for s in 0..3 {
            for act in 0..2 {
                let row = a.slice(ndarray::s![s, act, ..]);
                assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn concentrated_alpha_pins_the_draw() {
        let mut counts = Array3::zeros((3, 1, 3));
        counts[[0, 0, 0]] = 1e9;
        let post = fit_posterior(&counts, 1.0, 2).unwrap();
        let row = post.sample_row(0, 0, &mut Stream::seed_from_u64(7)).unwrap();
        let l1 = (row[0] - 1.0).abs() + row[1].abs() + row[2].abs();
        assert!(l1 <= 1e-3, "near-degenerate Dirichlet strayed by L1 {l1:e}");
    }

    #[test]
    fn monte_carlo_mean_matches_analytic_mean() {
        let post = fit_posterior(&small_counts(), 1.0, 2).unwrap();
        let mut rng = Stream::seed_from_u64(21);
        let mut acc = Array1::<f64>::zeros(3);
        let draws = 10_000;
        for _ in 0..draws {
            acc += &post.sample_row(0, 0, &mut rng).unwrap();
        }
        acc /= draws as f64;
        let mean = post.mean_row(0, 0);
        let l1: f64 = acc.iter().zip(mean.iter()).map(|(a, m)| (a - m).abs()).sum();
        assert!(l1 <= 0.02, "MC mean off by L1 {l1:.4}");
    }

    #[test]
    fn rows_are_sampled_independently() {
        // Correlation between the first components of two different rows
        // should vanish; a shared-noise bug would show up immediately.
        let mut counts = Array3::zeros((3, 2, 3));
        counts[[0, 0, 0]] = 3.0;
        counts[[0, 1, 1]] = 3.0;
        let post = fit_posterior(&counts, 1.0, 2).unwrap();
        let mut rng = Stream::seed_from_u64(33);
        let draws = 10_000;
        let (mut xs, mut ys) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
        for _ in 0..draws {
            xs.push(post.sample_row(0, 0, &mut rng).unwrap()[0]);
            ys.push(post.sample_row(0, 1, &mut rng).unwrap()[0]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&xs), mean(&ys));
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r = cov / (vx.sqrt() * vy.sqrt());
        assert!(r.abs() < 0.05, "cross-row correlation r = {r:.4}");
    }

    #[test]
    fn from_batch_adds_prior_to_observed_counts() {
        let transitions = array![
            [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        ];
        let rewards = array![[1.0, 1.0], [3.0, 3.0], [0.0, 0.0]];
        let mdp = TabularMdp::new(transitions, rewards, 0.95, 2).unwrap();
        let expert = Policy::new(Array2::from_elem((3, 2), 0.5)).unwrap();
        let batch = rollout_batch(&mdp, &expert, 25, 20, 3).unwrap();
        let post = DirichletPosterior::from_batch(&batch, 0.5).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                for sp in 0..3 {
                    assert_eq!(
                        post.alpha()[[s, a, sp]],
                        batch.counts[[s, a, sp]] as f64 + 0.5
                    );
                }
            }
        }
    }

    #[test]
    fn mean_tensor_is_a_valid_environment_tensor() {
        let transitions = array![
            [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        ];
        let rewards = array![[1.0, 1.0], [3.0, 3.0], [0.0, 0.0]];
        let mdp = TabularMdp::new(transitions, rewards, 0.95, 2).unwrap();
        let expert = Policy::new(Array2::from_elem((3, 2), 0.5)).unwrap();
        let batch = rollout_batch(&mdp, &expert, 40, 20, 8).unwrap();
        let post = DirichletPosterior::from_batch(&batch, 1.0).unwrap();
        // The smoothed estimate plugs straight back into the environment
        // constructor, which re-checks simplex rows and the absorbing
        // terminal.
        mdp.with_transitions(post.mean()).unwrap();
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(fit_posterior(&small_counts(), 0.0, 2).is_err());
        assert!(fit_posterior(&small_counts(), -1.0, 2).is_err());
        assert!(fit_posterior(&small_counts(), f64::NAN, 2).is_err());
        assert!(fit_posterior(&small_counts(), 1.0, 3).is_err());
        let mut negative = small_counts();
        negative[[1, 0, 0]] = -1.0;
        assert!(fit_posterior(&negative, 1.0, 2).is_err());
        assert!(fit_posterior(&Array3::zeros((3, 2, 4)), 1.0, 2).is_err());
    }
}
