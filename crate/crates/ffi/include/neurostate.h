#ifndef NEUROSTATE_H
#define NEUROSTATE_H

/* Generated by cbindgen from the neurostate-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_ARGUMENT = 2,
  NS_STATUS_IO = 3,
  NS_STATUS_NUMERIC = 4,
  NS_STATUS_PANIC = 5,
} NsStatus;

/**
 * Model architecture selector for `ns_model_build`.
 */
typedef enum NsModelKind {
  NS_MODEL_KIND_CNN = 0,
  NS_MODEL_KIND_BILSTM = 1,
} NsModelKind;

/**
 * Opaque model handle.
 */
typedef struct NsModel NsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread; empty after a
 * success. Valid until the next call into the library on this thread.
 */
const char *ns_last_error_message(void);

/**
 * Builds a freshly initialized model with the default dropout rate.
 */
enum NsStatus ns_model_build(enum NsModelKind kind, uint64_t seed, struct NsModel **out);

/**
 * Loads a checkpoint written by `ns_model_save` or the CLI.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum NsStatus ns_model_load(const char *path, struct NsModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be nul-terminated.
 */
enum NsStatus ns_model_save(const struct NsModel *model, const char *path);

/**
 * Releases a model handle; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void ns_model_free(struct NsModel *model);

/**
 * Expected `(seq_len, channels)` of each input sample.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NsStatus ns_model_input_shape(const struct NsModel *model, size_t *seq_len, size_t *channels);

/**
 * Class probabilities for `batch` row-major `[seq_len, channels]` samples.
 *
 * `probs_out` receives `batch * 6` values; `labels_out` (optional) receives
 * `batch` argmax labels in the order PVT, VWM, DOT, MOD, DYN, REST.
 *
 * # Safety
 * `data` must hold `batch * seq_len * channels` values and the outputs must
 * have room for the results.
 */
enum NsStatus ns_model_predict(const struct NsModel *model,
                               const double *data,
                               size_t batch,
                               size_t seq_len,
                               size_t channels,
                               double *probs_out,
                               uint32_t *labels_out);

/**
 * Layer table of the model as JSON; release with `ns_string_free`.
 *
 * # Safety
 * `model` must come from this library and `out` be a valid pointer.
 */
enum NsStatus ns_model_summary_json(const struct NsModel *model, char **out);

/**
 * Releases a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ns_string_free(char *s);

/**
 * Welch's unequal-variance t-test with a two-tailed p-value.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` values; outputs must be valid.
 */
enum NsStatus ns_welch_t(const double *a,
                         size_t na,
                         const double *b,
                         size_t nb,
                         double *t,
                         double *p,
                         double *dof);

/**
 * Pearson correlation with a two-tailed p-value on n - 2 degrees of freedom.
 *
 * # Safety
 * `x` and `y` must hold `n` values; outputs must be valid.
 */
enum NsStatus ns_pearson_r(const double *x, const double *y, size_t n, double *r, double *p);

/**
 * Number of 277-point segments a recording of `t` time points yields.
 */
size_t ns_segment_count(size_t t);

/**
 * Confusion matrix and per-class metrics of `n` label pairs (classes 0..6).
 *
 * `counts_out` receives 36 row-major counts (rows = true class). Precision,
 * recall and F1 arrays receive 6 values each; undefined ratios are 0.
 *
 * # Safety
 * Inputs must hold `n` values; every output must be valid.
 */
enum NsStatus ns_confusion_metrics(const uint32_t *truth,
                                   const uint32_t *predicted,
                                   size_t n,
                                   uint64_t *counts_out,
                                   double *accuracy,
                                   double *precision,
                                   double *recall,
                                   double *f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUROSTATE_H */
