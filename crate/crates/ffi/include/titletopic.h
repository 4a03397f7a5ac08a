#ifndef TITLETOPIC_H
#define TITLETOPIC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum TtStatus {
  TT_STATUS_OK = 0,
  TT_STATUS_NULL_ARGUMENT = 1,
  TT_STATUS_INVALID_UTF8 = 2,
  TT_STATUS_IO = 3,
  TT_STATUS_FORMAT = 4,
  TT_STATUS_SHAPE = 5,
  TT_STATUS_CONTRACT = 6,
  TT_STATUS_INDEX = 7,
  TT_STATUS_UNDEFINED_METRIC = 8,
  TT_STATUS_UNSUPPORTED = 9,
  TT_STATUS_CONFIG = 10,
  TT_STATUS_DATA = 11,
  TT_STATUS_PANIC = 12,
} TtStatus;

// A loaded classifier with its vocabulary.
typedef struct TtModel TtModel;

// Token saliency for one title.
typedef struct TtSaliency TtSaliency;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *tt_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void tt_string_free(char *s);

// Normalized form of a raw title.
//
// # Safety
// `raw` must be a NUL-terminated string; `out` must be writable.
enum TtStatus tt_preprocess_title(const char *raw, char **out);

// Area under the ROC curve of `n` scores against 0/1 labels.
//
// # Safety
// `scores` and `labels` must point to `n` readable elements; `out` must be
// writable.
enum TtStatus tt_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Load a checkpoint directory written by `titletopic train`.
//
// # Safety
// `dir` must be a NUL-terminated path; `out` must be writable. The handle
// is released with [`tt_model_free`].
enum TtStatus tt_model_load(const char *dir, struct TtModel **out);

// # Safety
// `model` must come from [`tt_model_load`] and not be used afterwards.
void tt_model_free(struct TtModel *model);

// Number of labels the model scores; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t tt_model_n_labels(const struct TtModel *model);

// Name of label `index`, borrowed from the handle.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum TtStatus tt_model_label_name(const struct TtModel *model, size_t index, const char **out);

// Per-label probabilities for a raw title into `probs[0..len]`; `len` must
// equal [`tt_model_n_labels`].
//
// # Safety
// `model` must be a live handle, `title` NUL-terminated, `probs` writable
// for `len` elements.
enum TtStatus tt_model_predict(const struct TtModel *model,
                               const char *title,
                               double *probs,
                               size_t len);

// Token saliency of a raw title. `target < 0` explains the best label.
//
// # Safety
// `model` must be a live handle, `title` NUL-terminated, `out` writable.
// The result is released with [`tt_saliency_free`].
enum TtStatus tt_model_explain(const struct TtModel *model,
                               const char *title,
                               int64_t target,
                               struct TtSaliency **out);

// Number of scored tokens; 0 for null.
//
// # Safety
// `s` must be null or a live handle.
size_t tt_saliency_len(const struct TtSaliency *s);

// Label whose logit was differentiated.
//
// # Safety
// `s` must be a live handle.
size_t tt_saliency_target(const struct TtSaliency *s);

// Token `i` (borrowed from the handle) and its score.
//
// # Safety
// `s` must be a live handle; `token` and `score` must be writable.
enum TtStatus tt_saliency_get(const struct TtSaliency *s,
                              size_t i,
                              const char **token,
                              double *score);

// # Safety
// `s` must come from [`tt_model_explain`] and not be used afterwards.
void tt_saliency_free(struct TtSaliency *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TITLETOPIC_H */
