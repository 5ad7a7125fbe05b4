//! Toolkit for learning tabular-MDP transition dynamics from expert
//! demonstrations.
//!
//! The crate provides, in rough pipeline order:
//!
//! * [`mdp`] — tabular MDP types plus exact planning: closed-form policy
//!   evaluation, value iteration, epsilon-ball extraction, and expert
//!   policies that are uniform over near-optimal actions.
//! * [`envgen`] — seeded random environment generation with a structure
//!   search that pins how many states have non-trivial epsilon-balls.
//! * [`data`] — batch rollouts of an expert policy and the transition-count
//!   statistics derived from them.
//! * [`posterior`] — Dirichlet-multinomial posteriors over transition rows.
//! * [`sampler`] — rejection sampling of the posterior subject to
//!   expert-optimality constraints, with adaptive slack tuning.
//! * [`experiment`] — the evaluation harness comparing point estimates,
//!   unconstrained posterior sampling, and constrained posterior sampling.
//! * [`report`] — CSV / JSON / SVG output with byte-stable formatting.
//! * [`io`] — the JSON document formats shared by the CLI and the library.
//!
//! Everything that consumes randomness takes an explicit seed or RNG stream,
//! and derived streams are computed with [`derive_seed`], so any pipeline is
//! reproducible bit-for-bit regardless of thread count.

pub mod data;
pub mod envgen;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mdp;
pub mod posterior;
pub mod report;
pub mod sampler;

pub use error::{Error, Result};

use rand_chacha::ChaCha8Rng;

/// RNG used for every sampling operation in the crate.
///
/// ChaCha8 is cheap, has a stable cross-platform stream for a given seed, and
/// supports cheap construction per work unit, which is what keeps parallel
/// runs deterministic.
pub type Stream = ChaCha8Rng;

/// Golden-ratio multiplier used to spread consecutive indices across the
/// 64-bit seed space (the same constant splitmix64 uses).
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives the seed for work unit `index` from a master seed.
///
/// The derivation is fixed — `master XOR (index + 1) * SEED_STRIDE` with
/// wrapping arithmetic — so datasets keep their seeds no matter how work is
/// scheduled. `index + 1` keeps unit 0 from collapsing onto the master seed
/// itself.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ index.wrapping_add(1).wrapping_mul(SEED_STRIDE)
}

/// Builds the RNG stream for work unit `index` under a master seed.
pub fn stream_for(master: u64, index: u64) -> Stream {
    use rand::SeedableRng;
    Stream::seed_from_u64(derive_seed(master, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let master = 0xDEAD_BEEF;
        let a = derive_seed(master, 0);
        let b = derive_seed(master, 1);
        assert_ne!(a, b);
        assert_ne!(a, master);
        // Frozen: the derivation is part of the file-format contract.
        assert_eq!(a, master ^ SEED_STRIDE);
        assert_eq!(b, master ^ 2u64.wrapping_mul(SEED_STRIDE));
    }

    #[test]
    fn streams_reproduce() {
        use rand::RngCore;
        let mut s1 = stream_for(7, 3);
        let mut s2 = stream_for(7, 3);
        assert_eq!(s1.next_u64(), s2.next_u64());
    }
}
