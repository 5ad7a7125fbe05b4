/* C interface for the itl tabular-MDP toolkit. Generated by cbindgen; do not edit. */

#ifndef ITL_FFI_H
#define ITL_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Where the sampler's anchor dynamics come from.
 */
typedef enum ItlAnchor {
  /**
   * Posterior-mean rows (the smoothed point estimate).
   */
  ItlAnchor_Mle = 0,
  /**
   * A single posterior draw per expert-supported row.
   */
  ItlAnchor_Sample = 1,
} ItlAnchor;

/**
 * Which Q-table defines the action balls in the sampler's acceptance check.
 */
typedef enum ItlBallSource {
  /**
   * Optimal Q from planning on the candidate tensor.
   */
  ItlBallSource_QStar = 0,
  /**
   * The expert policy's own Q on the candidate tensor.
   */
  ItlBallSource_QExpert = 1,
} ItlBallSource;

/**
 * Status code returned by every fallible call.
 */
typedef enum ItlStatus {
  /**
   * The call succeeded.
   */
  ItlStatus_Ok = 0,
  /**
   * A required pointer argument was `NULL`.
   */
  ItlStatus_NullPointer = 1,
  /**
   * An argument failed validation (shape, range, row sums, ...).
   */
  ItlStatus_InvalidArgument = 2,
  /**
   * An iterative method ran out of iterations.
   */
  ItlStatus_NoConvergence = 3,
  /**
   * A linear solve failed or left too large a residual.
   */
  ItlStatus_NumericalFailure = 4,
  /**
   * A rejection or search loop ran out of budget.
   */
  ItlStatus_BudgetExhausted = 5,
  /**
   * A panic was caught at the boundary; see the last error message.
   */
  ItlStatus_InternalPanic = 6,
} ItlStatus;

/**
 * Opaque handle to a validated tabular MDP.
 */
typedef struct ItlMdp ItlMdp;

/**
 * Opaque handle to a per-row Dirichlet posterior over transition dynamics.
 */
typedef struct ItlPosterior ItlPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Human-readable name of a status code, as a static NUL-terminated string.
 */
const char *itl_status_name(enum ItlStatus status);

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `capacity` bytes. Returns the full
 * length the message needs, including the NUL, so callers can resize and
 * retry; a return value of 1 means the message is empty. If `buf` is `NULL`
 * or `capacity` is zero, nothing is written.
 *
 * # Safety
 * `buf`, when non-NULL, must be valid for writing `capacity` bytes.
 */
uintptr_t itl_last_error_message(char *buf, uintptr_t capacity);

/**
 * Builds an environment handle from dense buffers.
 *
 * `transitions` holds `n_states * n_actions * n_states` doubles in
 * `(state, action, next_state)` row-major order; every `(state, action)` row
 * must sum to 1. `rewards` holds `n_states * n_actions` doubles. `terminal`
 * must index an absorbing zero-reward state and `discount` must lie strictly
 * in `(0, 1)`. On success `*out` owns the new handle; free it with
 * [`itl_mdp_free`].
 *
 * # Safety
 * `transitions` and `rewards` must be valid for reading the documented
 * lengths, and `out` must be valid for writing one pointer.
 */
enum ItlStatus itl_mdp_new(uintptr_t n_states,
                           uintptr_t n_actions,
                           uintptr_t terminal,
                           double discount,
                           const double *transitions,
                           const double *rewards,
                           struct ItlMdp **out);

/**
 * Builds the pinned reference environment that the experiment defaults use.
 * On success `*out` owns the new handle; free it with [`itl_mdp_free`].
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum ItlStatus itl_mdp_reference(struct ItlMdp **out);

/**
 * Frees an environment handle. `NULL` is a no-op.
 *
 * # Safety
 * `mdp` must be a pointer obtained from this library that has not already
 * been freed.
 */
void itl_mdp_free(struct ItlMdp *mdp);

/**
 * Number of states, or 0 if `mdp` is `NULL`.
 *
 * # Safety
 * `mdp`, when non-NULL, must be a live handle from this library.
 */
uintptr_t itl_mdp_n_states(const struct ItlMdp *mdp);

/**
 * Number of actions, or 0 if `mdp` is `NULL`.
 *
 * # Safety
 * `mdp`, when non-NULL, must be a live handle from this library.
 */
uintptr_t itl_mdp_n_actions(const struct ItlMdp *mdp);

/**
 * Index of the absorbing terminal state, or `SIZE_MAX` if `mdp` is `NULL`.
 *
 * # Safety
 * `mdp`, when non-NULL, must be a live handle from this library.
 */
uintptr_t itl_mdp_terminal(const struct ItlMdp *mdp);

/**
 * Discount factor, or NaN if `mdp` is `NULL`.
 *
 * # Safety
 * `mdp`, when non-NULL, must be a live handle from this library.
 */
double itl_mdp_discount(const struct ItlMdp *mdp);

/**
 * Copies the transition tensor into `out` (`n_states * n_actions * n_states`
 * doubles, row-major).
 *
 * # Safety
 * `mdp` must be a live handle and `out` valid for writing the documented
 * length.
 */
enum ItlStatus itl_mdp_transitions(const struct ItlMdp *mdp, double *out);

/**
 * Solves the environment by value iteration and writes any of the requested
 * outputs: optimal state values (`n_states` doubles), the optimal Q-table
 * (`n_states * n_actions` doubles, row-major), and the greedy action per
 * state (`n_states` entries, lowest index on ties). Each output pointer may
 * be `NULL` to skip it.
 *
 * # Safety
 * `mdp` must be a live handle; each non-NULL output must be valid for
 * writing its documented length.
 */
enum ItlStatus itl_plan(const struct ItlMdp *mdp,
                        double *out_values,
                        double *out_q,
                        uintptr_t *out_greedy);

/**
 * Writes the expert policy for `epsilon`: uniform over each state's
 * epsilon-ball of near-optimal actions. `out_probs` receives
 * `n_states * n_actions` doubles, row-major.
 *
 * # Safety
 * `mdp` must be a live handle and `out_probs` valid for writing the
 * documented length.
 */
enum ItlStatus itl_expert_policy(const struct ItlMdp *mdp, double epsilon, double *out_probs);

/**
 * Fits a Dirichlet posterior from a transition-count tensor
 * (`n_states * n_actions * n_states` doubles, row-major, non-negative) with
 * symmetric prior concentration `prior` added to every count. The terminal
 * state's rows are pinned to the absorbing row rather than estimated. On
 * success `*out` owns the new handle; free it with [`itl_posterior_free`].
 *
 * # Safety
 * `counts` must be valid for reading the documented length and `out` valid
 * for writing one pointer.
 */
enum ItlStatus itl_posterior_new(uintptr_t n_states,
                                 uintptr_t n_actions,
                                 uintptr_t terminal,
                                 double prior,
                                 const double *counts,
                                 struct ItlPosterior **out);

/**
 * Frees a posterior handle. `NULL` is a no-op.
 *
 * # Safety
 * `post` must be a pointer obtained from this library that has not already
 * been freed.
 */
void itl_posterior_free(struct ItlPosterior *post);

/**
 * Number of states, or 0 if `post` is `NULL`.
 *
 * # Safety
 * `post`, when non-NULL, must be a live handle from this library.
 */
uintptr_t itl_posterior_n_states(const struct ItlPosterior *post);

/**
 * Number of actions, or 0 if `post` is `NULL`.
 *
 * # Safety
 * `post`, when non-NULL, must be a live handle from this library.
 */
uintptr_t itl_posterior_n_actions(const struct ItlPosterior *post);

/**
 * Writes the posterior-mean transition tensor
 * (`n_states * n_actions * n_states` doubles, row-major) into `out`. Rows
 * are normalized counts-plus-prior; the terminal state's rows are the exact
 * absorbing row.
 *
 * # Safety
 * `post` must be a live handle and `out` valid for writing the documented
 * length.
 */
enum ItlStatus itl_posterior_mean(const struct ItlPosterior *post, double *out);

/**
 * Draws `n_samples` transition tensors from the posterior, constrained so
 * the environment's epsilon-expert stays optimal on every draw: supported
 * actions stay inside the epsilon-ball, never-taken actions stay out.
 *
 * The expert policy is derived from `mdp` at `epsilon`; rewards, discount,
 * and the terminal state are taken from `mdp` as structural knowledge, so
 * `post` must have been fitted with the same shape and terminal index.
 * `out_samples` receives `n_samples * n_states * n_actions * n_states`
 * doubles (sample-major, each tensor row-major). `out_outer_rounds`, when
 * non-NULL, receives the total number of constraint-satisfaction passes,
 * counting tuning restarts.
 *
 * Returns [`ItlStatus::BudgetExhausted`] when the rejection loops run out of
 * draws or tuning rounds; see the last error message for which row or
 * states were at fault.
 *
 * # Safety
 * `mdp` and `post` must be live handles; `out_samples` must be valid for
 * writing the documented length, and `out_outer_rounds`, when non-NULL, for
 * writing one `size_t`.
 */
enum ItlStatus itl_sample_constrained(const struct ItlMdp *mdp,
                                      const struct ItlPosterior *post,
                                      double epsilon,
                                      uintptr_t n_samples,
                                      uint64_t seed,
                                      enum ItlAnchor anchor,
                                      enum ItlBallSource ball_source,
                                      double *out_samples,
                                      uintptr_t *out_outer_rounds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ITL_FFI_H */
