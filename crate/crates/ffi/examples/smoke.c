/* Runs a short experiment through the C API and steps a session. */
#include <stdio.h>
#include <string.h>

#include "obo.h"

#define CHECK(call)                                                      \
    do {                                                                 \
        OboStatus s_ = (call);                                           \
        if (s_ != OBO_STATUS_OK) {                                       \
            fprintf(stderr, "%s: %d %s\n", #call, (int)s_, obo_last_error()); \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(int argc, char **argv) {
    const char *out_dir = argc > 1 ? argv[1] : "out";
    const char *toml = "run_id = \"smoke\"\n[stream]\nhorizon = 20\n";

    OboExperiment *exp = NULL;
    CHECK(obo_experiment_from_toml(toml, &exp));

    OboRunResult result;
    CHECK(obo_experiment_run(exp, out_dir, &result));
    printf("rounds %zu blr %.6e\n", result.rounds_completed, result.final_blr_cumulative);

    OboSession *session = NULL;
    CHECK(obo_session_new(exp, &session));
    size_t horizon = 0, dim_x = 0;
    CHECK(obo_session_shape(session, &horizon, &dim_x, NULL));
    OboStatus s;
    while ((s = obo_session_step(session)) == OBO_STATUS_OK) {
    }
    if (s != OBO_STATUS_FINISHED) {
        fprintf(stderr, "step: %d %s\n", (int)s, obo_last_error());
        return 1;
    }
    double x[64];
    if (dim_x > 64) return 1;
    CHECK(obo_session_x(session, x, dim_x));
    printf("x[0] %.6e\n", x[0]);

    double h[4] = {4.0, 1.0, 1.0, 3.0}, b[2] = {1.0, 2.0}, v[2];
    size_t iters = 0;
    CHECK(obo_solve_cg(h, 2, b, NULL, 10, 1e-12, v, &iters, NULL));
    printf("cg %zu %.12f %.12f\n", iters, v[0], v[1]);

    obo_session_free(session);
    obo_experiment_free(exp);
    printf("version %s\n", obo_version());
    return 0;
}
