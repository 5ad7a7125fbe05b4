/* Smoke test: drive the itl C ABI end to end from plain C.
 *
 * Build from the workspace root, after `cargo build -p itl-ffi`:
 *
 *   cc -std=c99 -Wall -Wextra -Werror -Icrates/itl-ffi/include \
 *      crates/itl-ffi/examples/smoke.c -o smoke \
 *      target/debug/libitl_ffi.a -lm -lpthread -ldl
 */
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "itl.h"

int main(void) {
    ItlMdp *env = NULL;
    ItlStatus status = itl_mdp_reference(&env);
    assert(status == ItlStatus_Ok);

    size_t n = itl_mdp_n_states(env);
    size_t m = itl_mdp_n_actions(env);
    assert(n == 16 && m == 6);
    assert(itl_mdp_terminal(env) == 15);
    assert(fabs(itl_mdp_discount(env) - 0.95) < 1e-15);

    double *values = malloc(n * sizeof(double));
    size_t *greedy = malloc(n * sizeof(size_t));
    status = itl_plan(env, values, NULL, greedy);
    assert(status == ItlStatus_Ok);
    for (size_t s = 0; s < n; s++) {
        assert(isfinite(values[s]));
        assert(greedy[s] < m);
    }
    assert(values[15] == 0.0); /* absorbing zero-reward terminal */

    double *probs = malloc(n * m * sizeof(double));
    status = itl_expert_policy(env, 3.0, probs);
    assert(status == ItlStatus_Ok);
    for (size_t s = 0; s < n; s++) {
        double row = 0.0;
        for (size_t a = 0; a < m; a++) row += probs[s * m + a];
        assert(fabs(row - 1.0) < 1e-12);
    }

    /* Feed the expert's greedy transitions back as fake counts. */
    double *counts = calloc(n * m * n, sizeof(double));
    for (size_t s = 0; s < n; s++) counts[(s * m + greedy[s]) * n + 15] = 5.0;
    ItlPosterior *post = NULL;
    status = itl_posterior_new(n, m, 15, 1.0, counts, &post);
    assert(status == ItlStatus_Ok);
    assert(itl_posterior_n_states(post) == n);

    double *mean = malloc(n * m * n * sizeof(double));
    status = itl_posterior_mean(post, mean);
    assert(status == ItlStatus_Ok);
    for (size_t s = 0; s < n; s++) {
        for (size_t a = 0; a < m; a++) {
            double row = 0.0;
            for (size_t sp = 0; sp < n; sp++) row += mean[(s * m + a) * n + sp];
            assert(fabs(row - 1.0) < 1e-12);
        }
    }

    /* Error path: NULL buffer reports NullPointer plus a message. */
    status = itl_posterior_mean(post, NULL);
    assert(status == ItlStatus_NullPointer);
    char msg[128];
    size_t needed = itl_last_error_message(msg, sizeof msg);
    assert(needed > 1 && strstr(msg, "out") != NULL);
    printf("status name: %s; message: %s\n", itl_status_name(status), msg);

    itl_posterior_free(post);
    itl_mdp_free(env);
    free(values);
    free(greedy);
    free(probs);
    free(counts);
    free(mean);
    printf("C smoke test passed\n");
    return 0;
}
