#ifndef OU_LAB_H
#define OU_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum OuStatus {
  OU_STATUS_OK = 0,
  // A required pointer was null.
  OU_STATUS_NULL_POINTER = 1,
  // Malformed input, a violated precondition or an unsupported request.
  OU_STATUS_INVALID_INPUT = 2,
  // Overflow, non-convergence or an ambiguous Jordan structure.
  OU_STATUS_NUMERICAL = 3,
  // The output buffer is shorter than the result.
  OU_STATUS_BUFFER_TOO_SMALL = 4,
  // An internal panic was caught.
  OU_STATUS_PANIC = 5,
} OuStatus;

typedef enum OuStability {
  OU_STABILITY_STRICTLY_STABLE = 0,
  OU_STABILITY_CRITICAL = 1,
  OU_STABILITY_UNSTABLE = 2,
} OuStability;

typedef enum OuGramianMethod {
  OU_GRAMIAN_METHOD_BLOCK_EXP = 0,
  OU_GRAMIAN_METHOD_LYAPUNOV_ODE = 1,
  OU_GRAMIAN_METHOD_QUADRATURE = 2,
} OuGramianMethod;

// An operator `L = 1/2 tr(Q D^2) + <Ax, D>` with its tolerance set.
typedef struct OuOperator OuOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *ou_version(void);

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *ou_last_error(void);

// New operator from row-major `dim x dim` matrices `q` and `a`.
//
// # Safety
// `q` and `a` must point to `dim * dim` doubles; `out` must be writable.
enum OuStatus ou_operator_new(size_t dim,
                              const double *q,
                              const double *a,
                              struct OuOperator **out);

// New operator from an operator document (`dim`, `Q`, `A` keys).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum OuStatus ou_operator_from_toml(const char *text, struct OuOperator **out);

// Release an operator; null is ignored.
//
// # Safety
// `op` must come from this library and not be used afterwards.
void ou_operator_free(struct OuOperator *op);

// Dimension of the operator, 0 for null.
//
// # Safety
// `op` must be null or a live handle.
size_t ou_operator_dim(const struct OuOperator *op);

// Override one tolerance by its short name (`resid`, `kwapien`, ...).
//
// # Safety
// `op` must be a live handle; `name` and `value` NUL-terminated strings.
enum OuStatus ou_operator_set_tolerance(struct OuOperator *op, const char *name, const char *value);

// Rank of the controllability matrix and whether it is full.
//
// # Safety
// `op` must be a live handle; outputs must be writable.
enum OuStatus ou_kalman_rank(const struct OuOperator *op, size_t *rank, bool *hypoelliptic);

// `s(A)` and its classification.
//
// # Safety
// `op` must be a live handle; outputs must be writable.
enum OuStatus ou_spectral_bound(const struct OuOperator *op,
                                double *bound,
                                enum OuStability *stability);

// Controllability Gramian `Q_t`, row-major into `out` (`len >= dim^2`).
//
// # Safety
// `op` must be a live handle; `out` must hold `len` doubles.
enum OuStatus ou_gramian(const struct OuOperator *op,
                         double t,
                         enum OuGramianMethod method,
                         double *out,
                         size_t len);

// `|Q_t^{-1/2} e^{tA}|_2`.
//
// # Safety
// `op` must be a live handle; `out` must be writable.
enum OuStatus ou_decay_norm(const struct OuOperator *op, double t, double *out);

// Law of `X_t` started at `x`: mean (`dim` values) and covariance
// (`dim^2`, row-major).
//
// # Safety
// `op` must be a live handle; `x` and `mean` hold `dim` doubles, `cov`
// holds `dim * dim`.
enum OuStatus ou_transition(const struct OuOperator *op,
                            const double *x,
                            double t,
                            double *mean,
                            double *cov);

// `n` exact samples of `X_t` started at `x`, one row of `dim` values per
// sample (`len >= n * dim`). Deterministic in `seed`.
//
// # Safety
// `op` must be a live handle; `x` holds `dim` doubles, `out` holds `len`.
enum OuStatus ou_sample_endpoints(const struct OuOperator *op,
                                  const double *x,
                                  double t,
                                  size_t n,
                                  uint64_t seed,
                                  double *out,
                                  size_t len);

// One-line summary of the real Jordan blocks, NUL-terminated into `buf`.
// `needed` receives the size including the NUL, also when `cap` is short.
//
// # Safety
// `op` must be a live handle; `buf` holds `cap` bytes; `needed` writable.
enum OuStatus ou_jordan_summary(const struct OuOperator *op, char *buf, size_t cap, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OU_LAB_H */
