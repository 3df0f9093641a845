#ifndef HOKME_H
#define HOKME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `Ok` is zero.
 */
typedef enum HokmeStatus {
  HOKME_STATUS_OK = 0,
  HOKME_STATUS_INVALID_PATH = 1,
  HOKME_STATUS_GRID_MISMATCH = 2,
  HOKME_STATUS_INVALID_ARGUMENT = 3,
  HOKME_STATUS_INDEX_OUT_OF_RANGE = 4,
  HOKME_STATUS_NUMERIC = 5,
  HOKME_STATUS_PARSE = 6,
  HOKME_STATUS_IO = 7,
  HOKME_STATUS_NULL_POINTER = 8,
  HOKME_STATUS_PANIC = 9,
} HokmeStatus;

/**
 * Opaque ensemble of sample paths on a shared time grid.
 */
typedef struct HokmeEnsemble HokmeEnsemble;

/**
 * Estimator settings. `scheme`: 0 = series, 1 = explicit. Time augmentation
 * is applied when `time_augment > 0`.
 */
typedef struct HokmeConfig {
  uint32_t order;
  double lambda;
  uint32_t refinement;
  uint32_t scheme;
  double time_augment;
} HokmeConfig;

typedef struct HokmeTestSummary {
  double statistic;
  double p_value;
  /**
   * 1 when the null of equal laws is rejected.
   */
  uint8_t reject;
} HokmeTestSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *hokme_last_error_message(void);

/**
 * order 1, lambda 1e-3, refinement 2, series scheme, no time augmentation.
 */
struct HokmeConfig hokme_config_default(void);

/**
 * Builds an ensemble of `n_paths` paths sharing `times[0..grid_len]`.
 * `values` is path-major, then time, then coordinate
 * (`n_paths * grid_len * dim` doubles).
 *
 * # Safety
 * The arrays must hold the stated number of doubles; `out` must be writable.
 */
enum HokmeStatus hokme_ensemble_from_flat(size_t n_paths,
                                          size_t grid_len,
                                          size_t dim,
                                          const double *times,
                                          const double *values,
                                          struct HokmeEnsemble **out);

/**
 * Reads a JSON-lines dataset.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out` must be writable.
 */
enum HokmeStatus hokme_ensemble_from_jsonl(const char *file, struct HokmeEnsemble **out);

/**
 * Releases an ensemble. Null is ignored.
 *
 * # Safety
 * `e` must come from this library and not be freed twice.
 */
void hokme_ensemble_free(struct HokmeEnsemble *e);

/**
 * Number of paths; 0 for null.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
size_t hokme_ensemble_len(const struct HokmeEnsemble *e);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
size_t hokme_ensemble_dim(const struct HokmeEnsemble *e);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
size_t hokme_ensemble_grid_len(const struct HokmeEnsemble *e);

/**
 * Signature kernel Gram matrix `k(x_i, y_j)`, row-major into
 * `out[0..len(x)*len(y)]`. Uses the solver and time augmentation of `cfg`.
 *
 * # Safety
 * Handles must be live; `out` must hold `len(x) * len(y)` doubles.
 */
enum HokmeStatus hokme_sig_kernel_gram(const struct HokmeEnsemble *x,
                                       const struct HokmeEnsemble *y,
                                       const struct HokmeConfig *cfg,
                                       double *out);

/**
 * Squared MMD of order `cfg.order`. `variant`: 0 = unbiased, 1 = biased.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HokmeStatus hokme_mmd(const struct HokmeEnsemble *x,
                           const struct HokmeEnsemble *y,
                           const struct HokmeConfig *cfg,
                           uint32_t variant,
                           double *out);

/**
 * Permutation two-sample test.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HokmeStatus hokme_two_sample_test(const struct HokmeEnsemble *x,
                                       const struct HokmeEnsemble *y,
                                       const struct HokmeConfig *cfg,
                                       uint32_t variant,
                                       double level,
                                       size_t permutations,
                                       uint64_t seed,
                                       struct HokmeTestSummary *out);

/**
 * Conditional-independence statistic of X and Y given Z (`z` may be null
 * for the unconditional version). Uses `cfg.refinement`, `cfg.scheme` and
 * `cfg.time_augment`; the other fields are ignored.
 *
 * # Safety
 * Non-null handles must be live; `out` must be writable.
 */
enum HokmeStatus hokme_ci_statistic(const struct HokmeEnsemble *x,
                                    const struct HokmeEnsemble *y,
                                    const struct HokmeEnsemble *z,
                                    const struct HokmeConfig *cfg,
                                    double epsilon,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOKME_H */
