#ifndef OBO_H
#define OBO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum OboStatus {
  OBO_STATUS_OK = 0,
  // A required pointer argument was null.
  OBO_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  OBO_STATUS_INVALID_UTF8 = 2,
  // The experiment configuration was rejected.
  OBO_STATUS_CONFIG = 3,
  // An argument was out of range or had the wrong dimension.
  OBO_STATUS_ARGUMENT = 4,
  // A non-finite value or solver breakdown.
  OBO_STATUS_NUMERICAL = 5,
  OBO_STATUS_IO = 6,
  // The session has already completed its last round.
  OBO_STATUS_FINISHED = 7,
  // Any other library error.
  OBO_STATUS_RUNTIME = 8,
  OBO_STATUS_PANIC = 9,
} OboStatus;

// A parsed and validated experiment configuration.
typedef struct OboExperiment OboExperiment;

// An experiment advanced one round at a time, without metrics or output.
// It starts from the same initial point and produces the same iterates as a
// full run of the same configuration.
typedef struct OboSession OboSession;

// Summary numbers of a completed run. Metrics that were disabled or could
// not be computed are NaN.
typedef struct OboRunResult {
  size_t rounds_completed;
  size_t horizon;
  double final_blr_cumulative;
  double mean_hg_error_last_10pct;
  // Round at which the run stopped on an error, or 0 if it finished.
  size_t failed_round;
} OboRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful call. Valid until the next `obo_*` call on this thread.
const char *obo_last_error(void);

// Library version as a static NUL-terminated string.
const char *obo_version(void);

// Parses and validates a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a writable pointer.
enum OboStatus obo_experiment_from_toml(const char *toml, struct OboExperiment **out);

// Reads, parses and validates a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum OboStatus obo_experiment_from_file(const char *path, struct OboExperiment **out);

// Overrides the master seed.
//
// # Safety
// `exp` must be a live handle.
enum OboStatus obo_experiment_set_seed(struct OboExperiment *exp, uint64_t seed);

// Runs the experiment and writes `<run_id>.csv` and `<run_id>.summary.json`
// into `output_dir`, or into the configured directory when it is null.
//
// A run that stops on a numerical failure still writes its artifacts and
// returns `OBO_STATUS_OK`; check `failed_round` in the result.
//
// # Safety
// `exp` must be a live handle, `output_dir` null or a NUL-terminated string,
// and `result` null or writable.
enum OboStatus obo_experiment_run(const struct OboExperiment *exp,
                                  const char *output_dir,
                                  struct OboRunResult *result);

// Releases an experiment handle. Null is ignored.
//
// # Safety
// `exp` must be null or a handle not yet freed.
void obo_experiment_free(struct OboExperiment *exp);

// Starts a session at round 1.
//
// # Safety
// `exp` must be a live handle and `out` writable.
enum OboStatus obo_session_new(const struct OboExperiment *exp, struct OboSession **out);

// Runs the next round. Returns `OBO_STATUS_FINISHED` once every round of the
// horizon has run. After any other failure the session cannot continue.
//
// # Safety
// `session` must be a live handle.
enum OboStatus obo_session_step(struct OboSession *session);

// The round the next call to `obo_session_step` will run (1-based).
//
// # Safety
// `session` must be a live handle and `out` writable.
enum OboStatus obo_session_round(const struct OboSession *session, size_t *out);

// Writes the horizon, the outer dimension and the inner dimension.
//
// # Safety
// `session` must be a live handle; each output pointer may be null.
enum OboStatus obo_session_shape(const struct OboSession *session,
                                 size_t *horizon,
                                 size_t *dim_x,
                                 size_t *dim_y);

// Copies the current outer iterate into `out`, which must hold exactly
// `dim_x` values.
//
// # Safety
// `session` must be a live handle and `out` valid for `len` writes.
enum OboStatus obo_session_x(const struct OboSession *session, double *out, size_t len);

// Copies the current inner iterate into `out`, which must hold exactly
// `dim_y` values.
//
// # Safety
// `session` must be a live handle and `out` valid for `len` writes.
enum OboStatus obo_session_y(const struct OboSession *session, double *out, size_t len);

// Copies the hypergradient estimate of the most recent round into `out`
// (`dim_x` values). Fails before the first step.
//
// # Safety
// `session` must be a live handle and `out` valid for `len` writes.
enum OboStatus obo_session_last_hypergrad(const struct OboSession *session,
                                          double *out,
                                          size_t len);

// Releases a session handle. Null is ignored.
//
// # Safety
// `session` must be null or a handle not yet freed.
void obo_session_free(struct OboSession *session);

// `q` fixed-step iterations `v ← v − λ (H v − b)` on the `n × n` row-major
// matrix `h`. `v0` may be null to start from zero. Writes `n` values to `out`.
//
// # Safety
// `h` must hold `n*n` values, `b` and `out` `n` values, `v0` null or `n` values.
enum OboStatus obo_solve_fixed_step(const double *h,
                                    size_t n,
                                    const double *b,
                                    const double *v0,
                                    double lambda,
                                    size_t q,
                                    double *out);

// Conjugate gradient on the `n × n` row-major SPD matrix `h`, stopping once
// `‖r‖ <= tol ‖b‖` or after `max_iters` iterations. `v0` may be null.
// `iterations` and `residual_norm` may be null.
//
// # Safety
// `h` must hold `n*n` values, `b` and `out` `n` values, `v0` null or `n` values.
enum OboStatus obo_solve_cg(const double *h,
                            size_t n,
                            const double *b,
                            const double *v0,
                            size_t max_iters,
                            double tol,
                            double *out,
                            size_t *iterations,
                            double *residual_norm);

// Projects `x` (length `n`) in place onto the Euclidean ball of the given
// radius around `center`; a null `center` means the origin.
//
// # Safety
// `x` must hold `n` values and `center` be null or hold `n` values.
enum OboStatus obo_project_ball(double *x, size_t n, const double *center, double radius);

// Clamps `x` (length `n`) in place to `[lo_i, hi_i]` coordinate-wise.
//
// # Safety
// `x`, `lo` and `hi` must each hold `n` values.
enum OboStatus obo_project_box(double *x, size_t n, const double *lo, const double *hi);

// Solver budget `min(q_max, q0 + ceil((t - 1) * q_increment))` at round `t >= 1`.
//
// # Safety
// `out` must be writable.
enum OboStatus obo_q_at(size_t q0, double q_increment, size_t q_max, size_t t, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBO_H */
