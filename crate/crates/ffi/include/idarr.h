#ifndef IDARR_H
#define IDARR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IdarrStopKind {
  IDARR_STOP_KIND_LCURVE = 0,
  IDARR_STOP_KIND_DISCREPANCY = 1,
  IDARR_STOP_KIND_FIXED = 2,
} IdarrStopKind;

typedef enum IdarrStatus {
  IDARR_STATUS_OK = 0,
  IDARR_STATUS_NULL_POINTER = 1,
  IDARR_STATUS_DIMENSION = 2,
  IDARR_STATUS_INVALID_ARGUMENT = 3,
  IDARR_STATUS_NUMERICAL = 4,
  IDARR_STATUS_IO = 5,
  IDARR_STATUS_STATE = 6,
  IDARR_STATUS_PANIC = 7,
} IdarrStatus;

typedef enum IdarrKernel {
  IDARR_KERNEL_EXP_DECAY = 0,
  IDARR_KERNEL_POLY_DECAY = 1,
} IdarrKernel;

typedef enum IdarrMethod {
  IDARR_METHOD_IDARR = 0,
  /**
   * LSQR in the Euclidean norm.
   */
  IDARR_METHOD_IR_L2_EUCLIDEAN = 1,
  /**
   * LSQR in the `x^T B x` norm.
   */
  IDARR_METHOD_IR_L2_BASIS = 2,
  IDARR_METHOD_L2_DIRECT = 3,
  IDARR_METHOD_BASIS_DIRECT = 4,
  IDARR_METHOD_DARTR = 5,
} IdarrMethod;

typedef enum IdarrSolveStatus {
  IDARR_SOLVE_STATUS_STOPPED = 0,
  IDARR_SOLVE_STATUS_TERMINATED = 1,
  IDARR_SOLVE_STATUS_NOT_CONVERGED = 2,
  IDARR_SOLVE_STATUS_WEAK_CORNER = 3,
  /**
   * Direct methods.
   */
  IDARR_SOLVE_STATUS_DIRECT = 4,
} IdarrSolveStatus;

/**
 * Forward operator plus its basis weights.
 */
typedef struct IdarrOperator IdarrOperator;

/**
 * Result of [`idarr_solve`].
 */
typedef struct IdarrSolution IdarrSolution;

/**
 * Stopping rule. Fields not used by `kind` are ignored.
 */
typedef struct IdarrStopRule {
  enum IdarrStopKind kind;
  size_t min_iters;
  size_t max_iters;
  /**
   * Iteration count for `Fixed`.
   */
  size_t k;
  /**
   * `||w||_2` for `Discrepancy`.
   */
  double noise_norm;
  double tau;
  /**
   * Nonzero selects the three-point max-curvature corner.
   */
  int32_t max_curvature;
} IdarrStopRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *idarr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *idarr_version(void);

/**
 * Default L-curve rule (10 to 30 iterations, adaptive pruning corner).
 */
struct IdarrStopRule idarr_stop_default(void);

/**
 * Dense `rows x cols` operator from row-major entries.
 *
 * # Safety
 * `entries` must point to `rows * cols` values; `out` must be writable.
 */
enum IdarrStatus idarr_operator_dense(size_t rows,
                                      size_t cols,
                                      const double *entries,
                                      struct IdarrOperator **out);

/**
 * Diagonal operator.
 *
 * # Safety
 * `diag` must point to `n` values; `out` must be writable.
 */
enum IdarrStatus idarr_operator_diagonal(size_t n, const double *diag, struct IdarrOperator **out);

/**
 * Discretized Fredholm operator of the benchmark kernels on `m`
 * observation and `n` source points.
 *
 * # Safety
 * `out` must be writable.
 */
enum IdarrStatus idarr_operator_fredholm(enum IdarrKernel kernel,
                                         size_t m,
                                         size_t n,
                                         struct IdarrOperator **out);

/**
 * Zero-boundary Gaussian blur of a `side x side` image.
 *
 * # Safety
 * `out` must be writable.
 */
enum IdarrStatus idarr_operator_gaussian_blur(size_t side,
                                              double width,
                                              struct IdarrOperator **out);

/**
 * Releases an operator. Null is ignored.
 *
 * # Safety
 * `op` must come from an `idarr_operator_*` constructor and not be used
 * afterwards.
 */
void idarr_operator_free(struct IdarrOperator *op);

/**
 * Rows of the operator, 0 for null.
 *
 * # Safety
 * `op` must be null or a live operator handle.
 */
size_t idarr_operator_rows(const struct IdarrOperator *op);

/**
 * Columns of the operator, 0 for null.
 *
 * # Safety
 * `op` must be null or a live operator handle.
 */
size_t idarr_operator_cols(const struct IdarrOperator *op);

/**
 * Replaces the exploration weights with a caller-supplied positive
 * diagonal `B`.
 *
 * # Safety
 * `op` must be a live operator handle and `weights` point to `n` values.
 */
enum IdarrStatus idarr_operator_set_basis(struct IdarrOperator *op,
                                          const double *weights,
                                          size_t n);

/**
 * `y = A x`.
 *
 * # Safety
 * `x` must hold `cols` values and `y` room for `rows` values.
 */
enum IdarrStatus idarr_operator_apply(const struct IdarrOperator *op,
                                      const double *x,
                                      size_t x_len,
                                      double *y,
                                      size_t y_len);

/**
 * Solves `A x = b` with `method`. A null `stop` selects
 * [`idarr_stop_default`]. Direct methods ignore the stopping rule.
 *
 * # Safety
 * `op` must be a live operator handle, `b` must point to `b_len` values,
 * `stop` must be null or valid, and `out` must be writable.
 */
enum IdarrStatus idarr_solve(const struct IdarrOperator *op,
                             enum IdarrMethod method,
                             const double *b,
                             size_t b_len,
                             const struct IdarrStopRule *stop,
                             struct IdarrSolution **out);

/**
 * Releases a solution. Null is ignored.
 *
 * # Safety
 * `sol` must come from [`idarr_solve`] and not be used afterwards.
 */
void idarr_solution_free(struct IdarrSolution *sol);

/**
 * Length of the estimate, 0 for null.
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t idarr_solution_len(const struct IdarrSolution *sol);

/**
 * Copies the estimate into `x`, which must hold exactly
 * [`idarr_solution_len`] values.
 *
 * # Safety
 * `sol` must be a live solution handle and `x` writable for `len` values.
 */
enum IdarrStatus idarr_solution_copy_x(const struct IdarrSolution *sol, double *x, size_t len);

/**
 * Selected iteration; 0 for direct methods or null.
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t idarr_solution_k_stop(const struct IdarrSolution *sol);

/**
 * # Safety
 * `sol` must be a live solution handle.
 */
enum IdarrSolveStatus idarr_solution_status(const struct IdarrSolution *sol);

/**
 * Number of recorded iterations (0 for direct methods).
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t idarr_solution_iterations(const struct IdarrSolution *sol);

/**
 * `||A x_k - b||_2` of iteration `k` (1-based), NaN when out of range.
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
double idarr_solution_residual(const struct IdarrSolution *sol, size_t k);

/**
 * Solution norm in the method's own metric at iteration `k` (1-based),
 * NaN when out of range.
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
double idarr_solution_norm(const struct IdarrSolution *sol, size_t k);

/**
 * Tikhonov parameter picked by a direct method, NaN otherwise.
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
double idarr_solution_lambda(const struct IdarrSolution *sol);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IDARR_H */
