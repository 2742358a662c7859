#ifndef ENSEMBLIER_H
#define ENSEMBLIER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum EnsStatus {
  EnsStatus_Ok = 0,
  EnsStatus_NullPointer = 1,
  EnsStatus_InvalidArgument = 2,
  EnsStatus_Format = 3,
  EnsStatus_Validation = 4,
  EnsStatus_Io = 5,
  EnsStatus_Divergence = 6,
  EnsStatus_BufferTooSmall = 7,
  EnsStatus_Panic = 8,
} EnsStatus;

typedef enum EnsObjective {
  EnsObjective_AccuracyOverall = 0,
  EnsObjective_FMacro = 1,
} EnsObjective;

typedef enum EnsResize {
  EnsResize_Sqr = 0,
  EnsResize_Pad = 1,
  EnsResize_Tile = 2,
} EnsResize;

/**
 * Opaque score matrix.
 */
typedef struct EnsScoreMatrix EnsScoreMatrix;

typedef struct EnsMetrics {
  double f_macro;
  double acc_macro;
  double acc_overall;
} EnsMetrics;

/**
 * Options for [`ens_ws_optimize`]. Fill with [`ens_ws_params_default`].
 */
typedef struct EnsWsParams {
  double gamma;
  double reg_coefficient;
  double learning_rate;
  size_t epochs;
  size_t batch_size;
  uint64_t seed;
} EnsWsParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library from this thread.
 */
const char *ens_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ens_version(void);

/**
 * Builds a matrix from row-major `n × c` scores and `n` labels.
 *
 * # Safety
 * `scores` must point to `n*c` doubles, `labels` to `n` values, `out` to writable storage.
 */
enum EnsStatus ens_score_matrix_new(size_t n,
                                    size_t c,
                                    const double *scores,
                                    const size_t *labels,
                                    struct EnsScoreMatrix **out);

/**
 * Reads a score CSV with `n_classes` columns.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum EnsStatus ens_score_matrix_load(const char *path,
                                     size_t n_classes,
                                     struct EnsScoreMatrix **out);

/**
 * Releases a matrix. Null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void ens_score_matrix_free(struct EnsScoreMatrix *m);

/**
 * # Safety
 * `m` must be a live handle; `n` and `c` may be null.
 */
enum EnsStatus ens_score_matrix_dims(const struct EnsScoreMatrix *m, size_t *n, size_t *c);

/**
 * Writes the argmax prediction of each row into `out` (capacity `cap`).
 *
 * # Safety
 * `out` must hold `cap` values.
 */
enum EnsStatus ens_score_matrix_predict(const struct EnsScoreMatrix *m, size_t *out, size_t cap);

/**
 * Macro F-measure and accuracies of `n` predictions over `c` classes.
 *
 * # Safety
 * `predictions` and `labels` must hold `n` values; `out` must be writable.
 */
enum EnsStatus ens_metrics(const size_t *predictions,
                           const size_t *labels,
                           size_t n,
                           size_t c,
                           struct EnsMetrics *out);

/**
 * Sum-rule fusion of aligned members into a new handle.
 *
 * # Safety
 * `members` must hold `count` live handles and `out` be writable.
 */
enum EnsStatus ens_sum_rule(const struct EnsScoreMatrix *const *members_ptr,
                            size_t count,
                            struct EnsScoreMatrix **out);

/**
 * Floating forward selection of up to `k` members. The chosen indices
 * (into `members`) are written ascending to `out_indices` (capacity `cap`).
 *
 * # Safety
 * Pointers must be valid for the stated sizes.
 */
enum EnsStatus ens_sffs(const struct EnsScoreMatrix *const *members_ptr,
                        size_t count,
                        size_t k,
                        enum EnsObjective objective,
                        size_t *out_indices,
                        size_t cap,
                        size_t *out_len,
                        double *out_objective);

struct EnsWsParams ens_ws_params_default(void);

/**
 * Learns simplex weights over `count` members; writes `count` weights.
 *
 * # Safety
 * `members` must hold `count` live handles and `out_weights` `count` doubles.
 */
enum EnsStatus ens_ws_optimize(const struct EnsScoreMatrix *const *members_ptr,
                               size_t count,
                               const struct EnsWsParams *params,
                               double *out_weights);

/**
 * Resizes one PNG file.
 *
 * # Safety
 * Paths must be NUL-terminated strings.
 */
enum EnsStatus ens_preprocess_png(enum EnsResize strategy,
                                  size_t target,
                                  const char *in_path,
                                  const char *out_path);

double ens_selu(double x);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENSEMBLIER_H */
