//! C ABI over the `itl` toolkit: environments, planning, expert policies,
//! Dirichlet posteriors, and constrained posterior sampling.
//!
//! Conventions, uniform across the surface:
//!
//! * Handles ([`ItlMdp`], [`ItlPosterior`]) are opaque pointers with
//!   create/free pairs; freeing `NULL` is a no-op.
//! * Every fallible call returns an [`ItlStatus`]; `Ok` is `0`. On failure a
//!   thread-local message is set, readable with [`itl_last_error_message`].
//! * Tensor buffers are caller-allocated `double` arrays in row-major
//!   `(state, action, next_state)` order; sizes are documented per call.
//! * Panics never unwind across the boundary: they are caught and surfaced
//!   as [`ItlStatus::InternalPanic`].
//! * Passing an enum value outside its declared range is undefined behavior,
//!   as is passing a handle that was already freed.
//!
//! Sampling reproduces the CLI's stream discipline: from the caller's `seed`,
//! the anchor stream is `derive_seed(seed, 3)` and the rejection-sampling
//! stream is `derive_seed(seed, 2)`, so a C caller and `itl itl-sample` agree
//! bit for bit on the same inputs.

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ndarray::{Array2, Array3};
use rand::SeedableRng;

use itl::envgen::{expert_for, reference_env};
use itl::mdp::{plan, TabularMdp};
use itl::posterior::{fit_posterior, DirichletPosterior};
use itl::sampler::{build_context, sample_constrained, AnchorMode, BallSource, SamplerSettings};
use itl::{derive_seed, Error, Stream};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItlStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was `NULL`.
    NullPointer = 1,
    /// An argument failed validation (shape, range, row sums, ...).
    InvalidArgument = 2,
    /// An iterative method ran out of iterations.
    NoConvergence = 3,
    /// A linear solve failed or left too large a residual.
    NumericalFailure = 4,
    /// A rejection or search loop ran out of budget.
    BudgetExhausted = 5,
    /// A panic was caught at the boundary; see the last error message.
    InternalPanic = 6,
}

/// Where the sampler's anchor dynamics come from.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItlAnchor {
    /// Posterior-mean rows (the smoothed point estimate).
    Mle = 0,
    /// A single posterior draw per expert-supported row.
    Sample = 1,
}

impl From<ItlAnchor> for AnchorMode {
    fn from(anchor: ItlAnchor) -> Self {
        match anchor {
            ItlAnchor::Mle => AnchorMode::Mle,
            ItlAnchor::Sample => AnchorMode::Sample,
        }
    }
}

/// Which Q-table defines the action balls in the sampler's acceptance check.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItlBallSource {
    /// Optimal Q from planning on the candidate tensor.
    QStar = 0,
    /// The expert policy's own Q on the candidate tensor.
    QExpert = 1,
}

impl From<ItlBallSource> for BallSource {
    fn from(source: ItlBallSource) -> Self {
        match source {
            ItlBallSource::QStar => BallSource::QStar,
            ItlBallSource::QExpert => BallSource::QExpert,
        }
    }
}

/// Opaque handle to a validated tabular MDP.
pub struct ItlMdp {
    inner: TabularMdp,
}

/// Opaque handle to a per-row Dirichlet posterior over transition dynamics.
pub struct ItlPosterior {
    inner: DirichletPosterior,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg.into());
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().clear());
}

/// Maps a library error onto the C status space and records its message.
fn fail(err: &Error) -> ItlStatus {
    set_last_error(err.to_string());
    match err {
        Error::Contract(_) | Error::Invalid(_) | Error::Config(_) => ItlStatus::InvalidArgument,
        Error::NoConvergence { .. } => ItlStatus::NoConvergence,
        Error::Numerics(_) => ItlStatus::NumericalFailure,
        Error::StructureSearchExhausted { .. }
        | Error::RowDrawsExhausted { .. }
        | Error::TuningRoundsExhausted { .. }
        | Error::FlaggedOverflow { .. } => ItlStatus::BudgetExhausted,
        Error::Io(_) | Error::Json(_) => ItlStatus::InvalidArgument,
    }
}

fn null_arg(what: &str) -> ItlStatus {
    set_last_error(format!("{what} must not be NULL"));
    ItlStatus::NullPointer
}

fn bad_arg(msg: impl Into<String>) -> ItlStatus {
    set_last_error(msg);
    ItlStatus::InvalidArgument
}

/// Runs a call body with panics trapped at the boundary.
fn guarded(body: impl FnOnce() -> ItlStatus) -> ItlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic caught at the C boundary");
            ItlStatus::InternalPanic
        }
    }
}

/// Length of an `(n, m, n)` tensor, or `None` on overflow.
fn tensor_len(n_states: usize, n_actions: usize) -> Option<usize> {
    n_states.checked_mul(n_actions)?.checked_mul(n_states)
}

/// Moves a freshly built handle out through an out-pointer.
///
/// # Safety
/// `out` must be valid for writing one pointer.
unsafe fn emit_handle<T>(out: *mut *mut T, value: T) -> ItlStatus {
    unsafe { ptr::write(out, Box::into_raw(Box::new(value))) };
    ItlStatus::Ok
}

/// Copies an iterator of floats into a caller buffer of the same length.
///
/// # Safety
/// `dst` must be valid for writing `len` doubles.
unsafe fn fill_f64(dst: *mut f64, src: impl IntoIterator<Item = f64>, len: usize) {
    let out = unsafe { slice::from_raw_parts_mut(dst, len) };
    for (slot, v) in out.iter_mut().zip(src) {
        *slot = v;
    }
}

/// Human-readable name of a status code, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn itl_status_name(status: ItlStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        ItlStatus::Ok => b"ok\0",
        ItlStatus::NullPointer => b"null pointer\0",
        ItlStatus::InvalidArgument => b"invalid argument\0",
        ItlStatus::NoConvergence => b"no convergence\0",
        ItlStatus::NumericalFailure => b"numerical failure\0",
        ItlStatus::BudgetExhausted => b"budget exhausted\0",
        ItlStatus::InternalPanic => b"internal panic\0",
    };
    name.as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `capacity` bytes. Returns the full
/// length the message needs, including the NUL, so callers can resize and
/// retry; a return value of 1 means the message is empty. If `buf` is `NULL`
/// or `capacity` is zero, nothing is written.
///
/// # Safety
/// `buf`, when non-NULL, must be valid for writing `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn itl_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                ptr::write(buf.add(n) as *mut u8, 0);
            }
        }
        bytes.len() + 1
    })
}

/// Builds an environment handle from dense buffers.
///
/// `transitions` holds `n_states * n_actions * n_states` doubles in
/// `(state, action, next_state)` row-major order; every `(state, action)` row
/// must sum to 1. `rewards` holds `n_states * n_actions` doubles. `terminal`
/// must index an absorbing zero-reward state and `discount` must lie strictly
/// in `(0, 1)`. On success `*out` owns the new handle; free it with
/// [`itl_mdp_free`].
///
/// # Safety
/// `transitions` and `rewards` must be valid for reading the documented
/// lengths, and `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_new(
    n_states: usize,
    n_actions: usize,
    terminal: usize,
    discount: f64,
    transitions: *const f64,
    rewards: *const f64,
    out: *mut *mut ItlMdp,
) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return null_arg("out");
        }
        if transitions.is_null() {
            return null_arg("transitions");
        }
        if rewards.is_null() {
            return null_arg("rewards");
        }
        let Some(t_len) = tensor_len(n_states, n_actions) else {
            return bad_arg("state/action counts overflow the transition tensor length");
        };
        let t_flat = unsafe { slice::from_raw_parts(transitions, t_len) };
        let r_flat = unsafe { slice::from_raw_parts(rewards, n_states * n_actions) };
        let t = Array3::from_shape_vec((n_states, n_actions, n_states), t_flat.to_vec())
            .expect("slice length matches the shape by construction");
        let r = Array2::from_shape_vec((n_states, n_actions), r_flat.to_vec())
            .expect("slice length matches the shape by construction");
        match TabularMdp::new(t, r, discount, terminal) {
            Ok(mdp) => unsafe { emit_handle(out, ItlMdp { inner: mdp }) },
            Err(e) => fail(&e),
        }
    })
}

/// Builds the pinned reference environment that the experiment defaults use.
/// On success `*out` owns the new handle; free it with [`itl_mdp_free`].
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_reference(out: *mut *mut ItlMdp) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return null_arg("out");
        }
        unsafe { emit_handle(out, ItlMdp { inner: reference_env() }) }
    })
}

/// Frees an environment handle. `NULL` is a no-op.
///
/// # Safety
/// `mdp` must be a pointer obtained from this library that has not already
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_free(mdp: *mut ItlMdp) {
    if !mdp.is_null() {
        drop(unsafe { Box::from_raw(mdp) });
    }
}

/// Number of states, or 0 if `mdp` is `NULL`.
///
/// # Safety
/// `mdp`, when non-NULL, must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_n_states(mdp: *const ItlMdp) -> usize {
    if mdp.is_null() {
        return 0;
    }
    unsafe { &*mdp }.inner.n_states()
}

/// Number of actions, or 0 if `mdp` is `NULL`.
///
/// # Safety
/// `mdp`, when non-NULL, must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_n_actions(mdp: *const ItlMdp) -> usize {
    if mdp.is_null() {
        return 0;
    }
    unsafe { &*mdp }.inner.n_actions()
}

/// Index of the absorbing terminal state, or `SIZE_MAX` if `mdp` is `NULL`.
///
/// # Safety
/// `mdp`, when non-NULL, must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_terminal(mdp: *const ItlMdp) -> usize {
    if mdp.is_null() {
        return usize::MAX;
    }
    unsafe { &*mdp }.inner.terminal()
}

/// Discount factor, or NaN if `mdp` is `NULL`.
///
/// # Safety
/// `mdp`, when non-NULL, must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_discount(mdp: *const ItlMdp) -> f64 {
    if mdp.is_null() {
        return f64::NAN;
    }
    unsafe { &*mdp }.inner.discount()
}

/// Copies the transition tensor into `out` (`n_states * n_actions * n_states`
/// doubles, row-major).
///
/// # Safety
/// `mdp` must be a live handle and `out` valid for writing the documented
/// length.
#[no_mangle]
pub unsafe extern "C" fn itl_mdp_transitions(mdp: *const ItlMdp, out: *mut f64) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if mdp.is_null() {
            return null_arg("mdp");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let inner = &unsafe { &*mdp }.inner;
        let len = inner.n_states() * inner.n_actions() * inner.n_states();
        unsafe { fill_f64(out, inner.transitions().iter().copied(), len) };
        ItlStatus::Ok
    })
}

/// Solves the environment by value iteration and writes any of the requested
/// outputs: optimal state values (`n_states` doubles), the optimal Q-table
/// (`n_states * n_actions` doubles, row-major), and the greedy action per
/// state (`n_states` entries, lowest index on ties). Each output pointer may
/// be `NULL` to skip it.
///
/// # Safety
/// `mdp` must be a live handle; each non-NULL output must be valid for
/// writing its documented length.
#[no_mangle]
pub unsafe extern "C" fn itl_plan(
    mdp: *const ItlMdp,
    out_values: *mut f64,
    out_q: *mut f64,
    out_greedy: *mut usize,
) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if mdp.is_null() {
            return null_arg("mdp");
        }
        let inner = &unsafe { &*mdp }.inner;
        let solved = match plan(inner) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let n = inner.n_states();
        let m = inner.n_actions();
        if !out_values.is_null() {
            unsafe { fill_f64(out_values, solved.values.values().iter().copied(), n) };
        }
        if !out_q.is_null() {
            unsafe { fill_f64(out_q, solved.q.values().iter().copied(), n * m) };
        }
        if !out_greedy.is_null() {
            let dst = unsafe { slice::from_raw_parts_mut(out_greedy, n) };
            dst.copy_from_slice(&solved.greedy);
        }
        ItlStatus::Ok
    })
}

/// Writes the expert policy for `epsilon`: uniform over each state's
/// epsilon-ball of near-optimal actions. `out_probs` receives
/// `n_states * n_actions` doubles, row-major.
///
/// # Safety
/// `mdp` must be a live handle and `out_probs` valid for writing the
/// documented length.
#[no_mangle]
pub unsafe extern "C" fn itl_expert_policy(
    mdp: *const ItlMdp,
    epsilon: f64,
    out_probs: *mut f64,
) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if mdp.is_null() {
            return null_arg("mdp");
        }
        if out_probs.is_null() {
            return null_arg("out_probs");
        }
        let inner = &unsafe { &*mdp }.inner;
        let expert = match expert_for(inner, epsilon) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let len = inner.n_states() * inner.n_actions();
        unsafe { fill_f64(out_probs, expert.probs().iter().copied(), len) };
        ItlStatus::Ok
    })
}

/// Fits a Dirichlet posterior from a transition-count tensor
/// (`n_states * n_actions * n_states` doubles, row-major, non-negative) with
/// symmetric prior concentration `prior` added to every count. The terminal
/// state's rows are pinned to the absorbing row rather than estimated. On
/// success `*out` owns the new handle; free it with [`itl_posterior_free`].
///
/// # Safety
/// `counts` must be valid for reading the documented length and `out` valid
/// for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn itl_posterior_new(
    n_states: usize,
    n_actions: usize,
    terminal: usize,
    prior: f64,
    counts: *const f64,
    out: *mut *mut ItlPosterior,
) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return null_arg("out");
        }
        if counts.is_null() {
            return null_arg("counts");
        }
        let Some(len) = tensor_len(n_states, n_actions) else {
            return bad_arg("state/action counts overflow the count tensor length");
        };
        let flat = unsafe { slice::from_raw_parts(counts, len) };
        let tensor = Array3::from_shape_vec((n_states, n_actions, n_states), flat.to_vec())
            .expect("slice length matches the shape by construction");
        match fit_posterior(&tensor, prior, terminal) {
            Ok(post) => unsafe { emit_handle(out, ItlPosterior { inner: post }) },
            Err(e) => fail(&e),
        }
    })
}

/// Frees a posterior handle. `NULL` is a no-op.
///
/// # Safety
/// `post` must be a pointer obtained from this library that has not already
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn itl_posterior_free(post: *mut ItlPosterior) {
    if !post.is_null() {
        drop(unsafe { Box::from_raw(post) });
    }
}

/// Number of states, or 0 if `post` is `NULL`.
///
/// # Safety
/// `post`, when non-NULL, must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn itl_posterior_n_states(post: *const ItlPosterior) -> usize {
    if post.is_null() {
        return 0;
    }
    unsafe { &*post }.inner.n_states()
}

/// Number of actions, or 0 if `post` is `NULL`.
///
/// # Safety
/// `post`, when non-NULL, must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn itl_posterior_n_actions(post: *const ItlPosterior) -> usize {
    if post.is_null() {
        return 0;
    }
    unsafe { &*post }.inner.n_actions()
}

/// Writes the posterior-mean transition tensor
/// (`n_states * n_actions * n_states` doubles, row-major) into `out`. Rows
/// are normalized counts-plus-prior; the terminal state's rows are the exact
/// absorbing row.
///
/// # Safety
/// `post` must be a live handle and `out` valid for writing the documented
/// length.
#[no_mangle]
pub unsafe extern "C" fn itl_posterior_mean(post: *const ItlPosterior, out: *mut f64) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if post.is_null() {
            return null_arg("post");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let inner = &unsafe { &*post }.inner;
        let mean = inner.mean();
        let len = mean.len();
        unsafe { fill_f64(out, mean.iter().copied(), len) };
        ItlStatus::Ok
    })
}

/// Draws `n_samples` transition tensors from the posterior, constrained so
/// the environment's epsilon-expert stays optimal on every draw: supported
/// actions stay inside the epsilon-ball, never-taken actions stay out.
///
/// The expert policy is derived from `mdp` at `epsilon`; rewards, discount,
/// and the terminal state are taken from `mdp` as structural knowledge, so
/// `post` must have been fitted with the same shape and terminal index.
/// `out_samples` receives `n_samples * n_states * n_actions * n_states`
/// doubles (sample-major, each tensor row-major). `out_outer_rounds`, when
/// non-NULL, receives the total number of constraint-satisfaction passes,
/// counting tuning restarts.
///
/// Returns [`ItlStatus::BudgetExhausted`] when the rejection loops run out of
/// draws or tuning rounds; see the last error message for which row or
/// states were at fault.
///
/// # Safety
/// `mdp` and `post` must be live handles; `out_samples` must be valid for
/// writing the documented length, and `out_outer_rounds`, when non-NULL, for
/// writing one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn itl_sample_constrained(
    mdp: *const ItlMdp,
    post: *const ItlPosterior,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    anchor: ItlAnchor,
    ball_source: ItlBallSource,
    out_samples: *mut f64,
    out_outer_rounds: *mut usize,
) -> ItlStatus {
    guarded(|| {
        clear_last_error();
        if mdp.is_null() {
            return null_arg("mdp");
        }
        if post.is_null() {
            return null_arg("post");
        }
        if out_samples.is_null() {
            return null_arg("out_samples");
        }
        let env = &unsafe { &*mdp }.inner;
        let posterior = &unsafe { &*post }.inner;
        if posterior.n_states() != env.n_states()
            || posterior.n_actions() != env.n_actions()
            || posterior.terminal() != env.terminal()
        {
            return bad_arg(format!(
                "posterior shape ({}, {}; terminal {}) does not match the environment \
                 ({}, {}; terminal {})",
                posterior.n_states(),
                posterior.n_actions(),
                posterior.terminal(),
                env.n_states(),
                env.n_actions(),
                env.terminal()
            ));
        }
        let Some(per_sample) = tensor_len(env.n_states(), env.n_actions()) else {
            return bad_arg("state/action counts overflow the sample tensor length");
        };
        let Some(total) = n_samples.checked_mul(per_sample) else {
            return bad_arg("n_samples overflows the output buffer length");
        };

        let expert = match expert_for(env, epsilon) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let settings = SamplerSettings { ball_source: ball_source.into(), ..Default::default() };
        let mut anchor_rng = Stream::seed_from_u64(derive_seed(seed, 3));
        let ctx = match build_context(
            posterior,
            &expert,
            env.rewards(),
            env.discount(),
            epsilon,
            anchor.into(),
            &mut anchor_rng,
        ) {
            Ok(ctx) => ctx,
            Err(e) => return fail(&e),
        };
        let mut sample_rng = Stream::seed_from_u64(derive_seed(seed, 2));
        let set = match sample_constrained(posterior, &ctx, n_samples, &settings, &mut sample_rng)
        {
            Ok(set) => set,
            Err(e) => return fail(&e),
        };

        let flat = set.samples.iter().flat_map(|t| t.iter().copied());
        unsafe { fill_f64(out_samples, flat, total) };
        if !out_outer_rounds.is_null() {
            unsafe { ptr::write(out_outer_rounds, set.outer_rounds_used) };
        }
        ItlStatus::Ok
    })
}
