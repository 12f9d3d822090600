#ifndef SAMC_H
#define SAMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SamcStatus {
  SAMC_STATUS_OK = 0,
  SAMC_STATUS_NULL_ARGUMENT = 1,
  SAMC_STATUS_INVALID_ARGUMENT = 2,
  SAMC_STATUS_IO = 3,
  SAMC_STATUS_CORRUPT_CHECKPOINT = 4,
  SAMC_STATUS_FINGERPRINT_MISMATCH = 5,
  SAMC_STATUS_SHAPE = 6,
  SAMC_STATUS_METRIC = 7,
  SAMC_STATUS_INTERNAL = 99,
} SamcStatus;

/**
 * A loaded checkpoint (opaque).
 */
typedef struct SamcModel SamcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *samc_last_error(void);

/**
 * Load a training checkpoint. On success `*out` owns a model that must be
 * released with [`samc_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SamcStatus samc_model_load(const char *path, struct SamcModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`samc_model_load`] and not be used afterwards.
 */
void samc_model_free(struct SamcModel *model);

/**
 * Side length of the square images the model accepts, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live model.
 */
size_t samc_model_image_size(const struct SamcModel *model);

/**
 * Training steps recorded in the checkpoint, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live model.
 */
uint64_t samc_model_step(const struct SamcModel *model);

/**
 * Remove makeup from one `height x width` image. `output` receives
 * `height * width * 3` floats; `attention` (may be null) receives
 * `height * width` values in `[0, 1]`.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum SamcStatus samc_demakeup(const struct SamcModel *model,
                              const float *input,
                              size_t height,
                              size_t width,
                              float *output,
                              float *attention);

/**
 * Cosine similarity of two `len`-vectors.
 *
 * # Safety
 * `a` and `b` must hold `len` values; `out` must be writable.
 */
enum SamcStatus samc_cosine_similarity(const double *a, const double *b, size_t len, double *out);

/**
 * TPR (percent) at each of `n_targets` false-positive rates.
 *
 * # Safety
 * Arrays must hold the stated counts; `out` must hold `n_targets` values.
 */
enum SamcStatus samc_tpr_at_fpr(const double *genuine,
                                size_t n_genuine,
                                const double *impostor,
                                size_t n_impostor,
                                const double *targets,
                                size_t n_targets,
                                double *out);

/**
 * Rank-1 accuracy (percent). Embeddings are row-major `count x dim`;
 * identities are integer labels, one per row. Gallery identities must be
 * unique and cover every probe identity.
 *
 * # Safety
 * Arrays must hold the stated counts; `out` must be writable.
 */
enum SamcStatus samc_rank1_accuracy(const double *probe_embeddings,
                                    const uint64_t *probe_ids,
                                    size_t n_probes,
                                    const double *gallery_embeddings,
                                    const uint64_t *gallery_ids,
                                    size_t n_gallery,
                                    size_t dim,
                                    double *out);

/**
 * Library version, NUL-terminated and static.
 */
const char *samc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAMC_H */
