#ifndef FUDA_H
#define FUDA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FudaStatus {
  FUDA_STATUS_OK = 0,
  FUDA_STATUS_NULL_POINTER = 1,
  FUDA_STATUS_INVALID_ARGUMENT = 2,
  FUDA_STATUS_DIMENSION = 3,
  FUDA_STATUS_PARSE = 4,
  FUDA_STATUS_IO = 5,
  FUDA_STATUS_CONFIG = 6,
  FUDA_STATUS_NUMERIC = 7,
  FUDA_STATUS_PROTOCOL = 8,
  FUDA_STATUS_PANIC = 9,
} FudaStatus;

typedef enum FudaAggregator {
  FUDA_AGGREGATOR_UNIFORM = 0,
  FUDA_AGGREGATOR_SAMPLE_COUNT = 1,
  FUDA_AGGREGATOR_ENTROPY_UNSCALED = 2,
  FUDA_AGGREGATOR_SEA = 3,
} FudaAggregator;

// Opaque dataset handle.
typedef struct FudaDataset FudaDataset;

// Opaque model handle.
typedef struct FudaModel FudaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fuda_version(void);

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *fuda_last_error_message(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum FudaStatus fuda_dataset_load(const char *path, struct FudaDataset **out);

// # Safety
// `ds` must be NULL or a handle from [`fuda_dataset_load`] not yet freed.
void fuda_dataset_free(struct FudaDataset *ds);

// Number of samples; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t fuda_dataset_len(const struct FudaDataset *ds);

// # Safety
// `ds` must be NULL or a live dataset handle.
size_t fuda_dataset_dim(const struct FudaDataset *ds);

// # Safety
// `ds` must be NULL or a live dataset handle.
size_t fuda_dataset_num_classes(const struct FudaDataset *ds);

// # Safety
// `ds` must be NULL or a live dataset handle.
bool fuda_dataset_is_labeled(const struct FudaDataset *ds);

// Loads a model file written by the `fuda` CLI.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum FudaStatus fuda_model_load(const char *path, struct FudaModel **out);

// # Safety
// `model` must be a live model handle and `path` a NUL-terminated string.
enum FudaStatus fuda_model_save(const struct FudaModel *model, const char *path);

// # Safety
// `model` must be NULL or a handle from this library not yet freed.
void fuda_model_free(struct FudaModel *model);

// # Safety
// `model` must be NULL or a live model handle.
size_t fuda_model_input_dim(const struct FudaModel *model);

// # Safety
// `model` must be NULL or a live model handle.
size_t fuda_model_num_classes(const struct FudaModel *model);

// Logits for `rows` row-major samples of width `cols`. `logits` must hold
// `rows * num_classes` values.
//
// # Safety
// `features` must point to `rows * cols` doubles and `logits` to
// `logits_len` writable doubles.
enum FudaStatus fuda_model_forward(const struct FudaModel *model,
                                   const double *features,
                                   size_t rows,
                                   size_t cols,
                                   double *logits,
                                   size_t logits_len);

// Shannon entropy (nats) of one probability vector.
//
// # Safety
// `probs` must point to `len` doubles and `out` to one writable double.
enum FudaStatus fuda_prediction_entropy(const double *probs, size_t len, double *out);

// Mean prediction entropy of `model` over the samples of `ds`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum FudaStatus fuda_model_mean_entropy(const struct FudaModel *model,
                                        const struct FudaDataset *ds,
                                        double *out);

// Fraction of labeled samples in `ds` classified correctly.
//
// # Safety
// Handles must be live; `out` must be writable.
enum FudaStatus fuda_model_accuracy(const struct FudaModel *model,
                                    const struct FudaDataset *ds,
                                    double *out);

// Aggregation weights for `m` clients from their mean entropies and
// sample counts. Writes `m` weights summing to 1.
//
// # Safety
// `entropies`, `sample_counts` and `weights_out` must each point to `m` elements.
enum FudaStatus fuda_compute_weights(const double *entropies,
                                     const size_t *sample_counts,
                                     size_t m,
                                     enum FudaAggregator kind,
                                     double *weights_out);

// Weighted parameter average of `m` models with identical architecture.
// The result is a new handle owned by the caller.
//
// # Safety
// `models` must point to `m` live model handles, `weights` to `m` doubles,
// and `out` must be writable.
enum FudaStatus fuda_aggregate(const struct FudaModel *const *models,
                               const double *weights,
                               size_t m,
                               struct FudaModel **out);

// Runs the full pipeline for `seed` and returns the JSON run report.
// `config_json` may be NULL for the standard synthetic benchmark. Free the
// result with [`fuda_string_free`].
//
// # Safety
// `config_json` must be NULL or NUL-terminated; `out` must be writable.
enum FudaStatus fuda_run_json(const char *config_json, uint64_t seed, char **out);

// # Safety
// `s` must be NULL or a string returned by this library not yet freed.
void fuda_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUDA_H */
