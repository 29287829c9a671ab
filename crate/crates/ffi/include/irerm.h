#ifndef IRERM_H
#define IRERM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IrermStatus {
  IRERM_STATUS_OK = 0,
  IRERM_STATUS_NULL_POINTER = 1,
  IRERM_STATUS_INVALID_ARGUMENT = 2,
  IRERM_STATUS_UNKNOWN_PROBLEM = 3,
  IRERM_STATUS_CONFIG = 4,
  IRERM_STATUS_SOLVER = 5,
  IRERM_STATUS_IO = 6,
  IRERM_STATUS_OUT_OF_RANGE = 7,
  IRERM_STATUS_PANIC = 8,
} IrermStatus;

typedef enum IrermSolver {
  IRERM_SOLVER_IRERM = 0,
  IRERM_SOLVER_STORM = 1,
} IrermSolver;

typedef enum IrermVariant {
  IRERM_VARIANT_V1 = 1,
  IRERM_VARIANT_V2 = 2,
} IrermVariant;

/**
 * Solver kind, variant and parameters.
 */
typedef struct IrermConfig IrermConfig;

/**
 * A benchmark problem.
 */
typedef struct IrermProblem IrermProblem;

/**
 * The result of one run.
 */
typedef struct IrermTrace IrermTrace;

/**
 * Scalars of one iteration. Quantities a solver does not define are NaN.
 */
typedef struct IrermRecord {
  uint64_t k;
  double delta;
  double theta;
  double h;
  double gnorm;
  double pred;
  double ared;
  bool success;
  uint64_t samples_charged;
  uint64_t cost_after;
  double exact_f;
  double exact_gradnorm;
} IrermRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *irerm_last_error(void);

/**
 * Creates problem `id` (`"p1"` … `"p17"` or `"quad"`) of dimension `n`.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IrermStatus irerm_problem_new(const char *id, size_t n, struct IrermProblem **out);

/**
 * # Safety
 * `problem` must come from [`irerm_problem_new`] and not be used afterwards.
 */
void irerm_problem_free(struct IrermProblem *problem);

/**
 * # Safety
 * `problem` and `out` must be valid pointers.
 */
enum IrermStatus irerm_problem_dim(const struct IrermProblem *problem, size_t *out);

/**
 * Writes the starting point into `x[0..len]`; `len` must equal the dimension.
 *
 * # Safety
 * `x` must point to `len` writable doubles.
 */
enum IrermStatus irerm_problem_initial_point(const struct IrermProblem *problem,
                                             double *x,
                                             size_t len);

/**
 * Exact objective `Σ f_i(x)²`.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` be valid.
 */
enum IrermStatus irerm_problem_value(const struct IrermProblem *problem,
                                     const double *x,
                                     size_t len,
                                     double *out);

/**
 * Exact gradient, written into `g[0..len]`.
 *
 * # Safety
 * `x` and `g` must each point to `len` doubles.
 */
enum IrermStatus irerm_problem_gradient(const struct IrermProblem *problem,
                                        const double *x,
                                        double *g,
                                        size_t len);

/**
 * Default configuration of `solver`/`variant` for dimension `n`, including
 * the default budget.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IrermStatus irerm_config_new(enum IrermSolver solver,
                                  enum IrermVariant variant,
                                  size_t n,
                                  struct IrermConfig **out);

/**
 * Sets one parameter, e.g. `("eta1", "0.2")` or `("budget", "5000")`.
 * The whole configuration is validated before the call returns; on failure
 * it is left unchanged.
 *
 * # Safety
 * `key` and `value` must be NUL-terminated strings.
 */
enum IrermStatus irerm_config_set(struct IrermConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must come from [`irerm_config_new`] and not be used afterwards.
 */
void irerm_config_free(struct IrermConfig *config);

/**
 * Runs the configured solver on `problem` with multiplicative noise of
 * amplitude `sigma` and the random stream seeded by `seed`.
 *
 * # Safety
 * All pointers must be valid; `out` receives a new trace handle.
 */
enum IrermStatus irerm_run(const struct IrermProblem *problem,
                           const struct IrermConfig *config,
                           double sigma,
                           uint64_t seed,
                           struct IrermTrace **out);

/**
 * # Safety
 * `trace` must come from [`irerm_run`] and not be used afterwards.
 */
void irerm_trace_free(struct IrermTrace *trace);

/**
 * # Safety
 * `trace` and `out` must be valid pointers.
 */
enum IrermStatus irerm_trace_iterations(const struct IrermTrace *trace, size_t *out);

/**
 * Exact objective at the final iterate.
 *
 * # Safety
 * `trace` and `out` must be valid pointers.
 */
enum IrermStatus irerm_trace_final_f(const struct IrermTrace *trace, double *out);

/**
 * Samples charged over the whole run.
 *
 * # Safety
 * `trace` and `out` must be valid pointers.
 */
enum IrermStatus irerm_trace_final_cost(const struct IrermTrace *trace, uint64_t *out);

/**
 * # Safety
 * `x` must point to `len` writable doubles; `len` must equal the dimension.
 */
enum IrermStatus irerm_trace_final_x(const struct IrermTrace *trace, double *x, size_t len);

/**
 * Scalars of iteration `k`.
 *
 * # Safety
 * `trace` and `out` must be valid pointers.
 */
enum IrermStatus irerm_trace_record(const struct IrermTrace *trace,
                                    size_t k,
                                    struct IrermRecord *out);

/**
 * Number of invariant violations of `trace` under `config`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum IrermStatus irerm_trace_check(const struct IrermTrace *trace,
                                   const struct IrermConfig *config,
                                   size_t *out);

/**
 * Writes the per-iteration CSV the benchmark harness produces.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum IrermStatus irerm_trace_write_csv(const struct IrermTrace *trace, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRERM_H */
