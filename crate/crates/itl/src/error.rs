//! Crate-wide error type.

use thiserror::Error;

use crate::sampler::DeltaTable;

pub type Result<T> = std::result::Result<T, Error>;

/// Which rejection-loop constraint a row draw was being tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowConstraintKind {
    /// Never-taken action: constraint value must clear a lower bound.
    Gap,
    /// Expert-supported action at a stochastic state: constraint value must
    /// fall inside a symmetric window.
    Window,
    /// Expert-supported action at a deterministic state, in tolerance mode.
    Equality,
}

impl std::fmt::Display for RowConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RowConstraintKind::Gap => "gap",
            RowConstraintKind::Window => "window",
            RowConstraintKind::Equality => "equality",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Data failed validation (malformed tensors, bad row sums, ...).
    #[error("invalid data: {0}")]
    Invalid(String),

    /// An iterative method ran out of iterations.
    #[error("no convergence after {iters} iterations (last residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    /// A direct linear solve failed or left too large a residual.
    #[error("linear solve failed: {0}")]
    Numerics(String),

    /// Environment structure search ran out of seeds.
    #[error(
        "no environment matched targets {targets:?} within {tries} seeds; \
         closest was seed {closest_seed} with counts {closest:?}"
    )]
    StructureSearchExhausted {
        tries: u64,
        targets: Vec<(f64, usize)>,
        closest_seed: u64,
        closest: Vec<(f64, usize)>,
    },

    /// A single row's rejection loop exhausted its draw budget.
    #[error(
        "row rejection loop exhausted {draws} draws at state {state}, action {action} \
         ({kind} constraint, current bound {bound:e})"
    )]
    RowDrawsExhausted {
        state: usize,
        action: usize,
        draws: usize,
        bound: f64,
        kind: RowConstraintKind,
    },

    /// Slack tuning kept failing the ball-property check.
    #[error(
        "ball-property check still failing after {rounds} tuning rounds \
         (failing states {failing:?})"
    )]
    TuningRoundsExhausted {
        rounds: usize,
        failing: Vec<usize>,
        last_deltas: Box<DeltaTable>,
    },

    /// Too many datasets in an experiment run had sampler failures.
    #[error("{flagged} of {total} datasets flagged sampler failures (limit is 1%)")]
    FlaggedOverflow { flagged: usize, total: usize },

    /// Bad experiment or CLI configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
