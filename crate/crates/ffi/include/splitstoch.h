#ifndef SPLITSTOCH_H
#define SPLITSTOCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_DIMENSION_MISMATCH = 3,
  SS_STATUS_EMPTY_PARAMETER_WINDOW = 4,
  SS_STATUS_NON_FINITE_ITERATE = 5,
  SS_STATUS_MAX_ITERS_EXCEEDED = 6,
  SS_STATUS_INDEX_OUT_OF_RANGE = 7,
  SS_STATUS_INVALID_SHAPE = 8,
  SS_STATUS_NO_CONVERGENCE = 9,
  SS_STATUS_PANIC = 10,
  SS_STATUS_OTHER = 11,
} SsStatus;

typedef enum SsNonsmoothKind {
  SS_NONSMOOTH_KIND_ZERO = 0,
  SS_NONSMOOTH_KIND_L1 = 1,
  SS_NONSMOOTH_KIND_HYPERPLANE = 2,
  SS_NONSMOOTH_KIND_POINT = 3,
} SsNonsmoothKind;

typedef enum SsSmoothKind {
  SS_SMOOTH_KIND_ZERO = 0,
  SS_SMOOTH_KIND_QUADRATIC = 1,
  SS_SMOOTH_KIND_LOGISTIC = 2,
} SsSmoothKind;

typedef enum SsTransform {
  SS_TRANSFORM_DCT = 0,
  SS_TRANSFORM_DFT_REAL = 1,
} SsTransform;

typedef struct SsConfig SsConfig;

typedef struct SsProblem SsProblem;

/**
 * Agents collected before a problem is finalized.
 */
typedef struct SsProblemBuilder SsProblemBuilder;

/**
 * Owns copies of the problem and configuration plus the current state.
 */
typedef struct SsSolver SsSolver;

/**
 * One agent `(f_i, g_i)`. Vector fields point at `n` doubles; `rows` is a
 * row-major `row_count x n` matrix and `labels` holds `row_count` values
 * in `{-1, +1}`. Fields unused by the selected kinds may be null.
 */
typedef struct SsAgentDesc {
  enum SsNonsmoothKind nonsmooth;
  /**
   * `L1` weight.
   */
  double l1_weight;
  /**
   * Hyperplane normal or the point of a `Point` indicator.
   */
  const double *vector;
  /**
   * Hyperplane offset `b` in `a^T x = b`.
   */
  double offset;
  enum SsSmoothKind smooth;
  /**
   * Quadratic centre.
   */
  const double *center;
  /**
   * Quadratic curvature or logistic weight.
   */
  double weight;
  const double *rows;
  const double *labels;
  size_t row_count;
} SsAgentDesc;

/**
 * Per-iteration metrics. `lyapunov` is NaN when no certificate is attached.
 */
typedef struct SsTraceRecord {
  uint64_t k;
  double stopping_error;
  double consensus_max;
  double phi;
  double h_value;
  double lyapunov;
  uint64_t participants;
  uint64_t prox_calls;
  uint64_t grad_calls;
} SsTraceRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length
 * without the terminator; 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ss_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Starts a problem over `R^n`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SsStatus ss_problem_builder_new(size_t n, struct SsProblemBuilder **out);

/**
 * Appends an agent. The last agent added becomes the server.
 *
 * # Safety
 * `builder` and `desc` must be valid; the arrays referenced by `desc` must
 * have the lengths documented on [`SsAgentDesc`].
 */
enum SsStatus ss_problem_builder_add_agent(struct SsProblemBuilder *builder,
                                           const struct SsAgentDesc *desc);

/**
 * Consumes `builder` (also on failure) and produces a problem.
 *
 * # Safety
 * `builder` must come from [`ss_problem_builder_new`] and not be used
 * afterwards; `name` must be null or a NUL-terminated string.
 */
enum SsStatus ss_problem_builder_finish(struct SsProblemBuilder *builder,
                                        const char *name,
                                        struct SsProblem **out);

/**
 * # Safety
 * `builder` must be null or come from [`ss_problem_builder_new`].
 */
void ss_problem_builder_free(struct SsProblemBuilder *builder);

/**
 * The one-dimensional toy `|x| + (x - 2)^2 / 2`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SsStatus ss_problem_toy1d(struct SsProblem **out);

/**
 * A seeded compressed-sensing instance with `p` measurement users. When
 * `x_true` is non-null it receives the planted signal (`n` doubles).
 *
 * # Safety
 * `out` must be valid; `x_true` null or writable for `n` doubles.
 */
enum SsStatus ss_problem_compressed_sensing(size_t n,
                                            size_t p,
                                            double sparsity,
                                            enum SsTransform transform,
                                            uint64_t seed,
                                            double *x_true,
                                            struct SsProblem **out);

/**
 * # Safety
 * `problem` must be null or a live handle.
 */
void ss_problem_free(struct SsProblem *problem);

/**
 * Dimension `n`, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t ss_problem_dimension(const struct SsProblem *problem);

/**
 * Number of agents `m` including the server, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t ss_problem_agents(const struct SsProblem *problem);

/**
 * `Phi(x)` for `n` doubles at `x`; `+inf` outside the domain.
 *
 * # Safety
 * `problem` live, `x` readable for `n` doubles, `out` writable.
 */
enum SsStatus ss_problem_objective(const struct SsProblem *problem, const double *x, double *out);

/**
 * Default configuration with uniform `alpha`, fixed-fraction
 * participation `rho` and step sizes inside their windows.
 *
 * # Safety
 * `problem` live, `out` writable.
 */
enum SsStatus ss_config_default(const struct SsProblem *problem,
                                double alpha,
                                double sigma,
                                double rho,
                                struct SsConfig **out);

/**
 * # Safety
 * `config` must be null or a live handle.
 */
void ss_config_free(struct SsConfig *config);

/**
 * Sets `gamma` and resets every `lambda_i` to its default for that step.
 *
 * # Safety
 * Both handles live.
 */
enum SsStatus ss_config_set_gamma(struct SsConfig *config,
                                  const struct SsProblem *problem,
                                  double gamma);

/**
 * # Safety
 * `config` live.
 */
enum SsStatus ss_config_set_seed(struct SsConfig *config, uint64_t seed);

/**
 * Sets `K` and the tolerance of the stopping test.
 *
 * # Safety
 * `config` live.
 */
enum SsStatus ss_config_set_stopping(struct SsConfig *config, size_t max_iters, double tolerance);

/**
 * Independent participation with probability `p[i]` for user `i`.
 *
 * # Safety
 * `config` live, `p` readable for `len` doubles.
 */
enum SsStatus ss_config_set_bernoulli(struct SsConfig *config, const double *p, size_t len);

/**
 * # Safety
 * `config` must be null or live.
 */
double ss_config_gamma(const struct SsConfig *config);

/**
 * Checks the parameter windows. On success `gamma_upper` (if non-null)
 * receives the step-size bound, `+inf` when unbounded.
 *
 * # Safety
 * Handles live; `gamma_upper` null or writable.
 */
enum SsStatus ss_config_validate(const struct SsProblem *problem,
                                 const struct SsConfig *config,
                                 double *gamma_upper);

/**
 * A solver at the all-zero start. Problem and config are copied, so both
 * handles may be freed afterwards.
 *
 * # Safety
 * Handles live, `out` writable.
 */
enum SsStatus ss_solver_new(const struct SsProblem *problem,
                            const struct SsConfig *config,
                            struct SsSolver **out);

/**
 * # Safety
 * `solver` must be null or live.
 */
void ss_solver_free(struct SsSolver *solver);

/**
 * One iteration; `record` (if non-null) receives its metrics.
 *
 * # Safety
 * `solver` live, `record` null or writable.
 */
enum SsStatus ss_solver_step(struct SsSolver *solver, struct SsTraceRecord *record);

/**
 * Runs the stopping loop from the current state. On
 * [`SsStatus::MaxItersExceeded`] the state is still advanced to the cap and
 * `record` holds its final metrics.
 *
 * # Safety
 * `solver` live, `record` null or writable.
 */
enum SsStatus ss_solver_run(struct SsSolver *solver, struct SsTraceRecord *record);

/**
 * Current iteration counter, or 0 for a null handle.
 *
 * # Safety
 * `solver` null or live.
 */
uint64_t ss_solver_iteration(const struct SsSolver *solver);

/**
 * Copies the server iterate `x^k` into `out` (`len` must equal `n`).
 *
 * # Safety
 * `solver` live, `out` writable for `len` doubles.
 */
enum SsStatus ss_solver_x(const struct SsSolver *solver, double *out, size_t len);

/**
 * Oracle-call counters so far, including the warm-up.
 *
 * # Safety
 * `solver` live; outputs null or writable.
 */
enum SsStatus ss_solver_calls(const struct SsSolver *solver,
                              uint64_t *prox_calls,
                              uint64_t *grad_calls);

/**
 * Returns to the all-zero start.
 *
 * # Safety
 * `solver` live.
 */
enum SsStatus ss_solver_reset(struct SsSolver *solver);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLITSTOCH_H */
