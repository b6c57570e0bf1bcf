#ifndef CHUNKPROBE_H
#define CHUNKPROBE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_ARGUMENT = 2,
  CP_STATUS_IO = 3,
  CP_STATUS_FORMAT = 4,
  CP_STATUS_MODEL = 5,
  CP_STATUS_NOT_FOUND = 6,
  CP_STATUS_PANIC = 7,
} CpStatus;

typedef enum CpModelKind {
  CP_MODEL_KIND_SENTENCE = 0,
  CP_MODEL_KIND_TWO_LEVEL = 1,
} CpModelKind;

/**
 * Trained model handle.
 */
typedef struct CpModel CpModel;

/**
 * Embedding store handle.
 */
typedef struct CpStore CpStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cp_version(void);

/**
 * Length of every embedding and grid.
 */
size_t cp_embedding_dim(void);

/**
 * Open a store written by `embed-import` or `embed-fetch`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CpStatus cp_store_open(const char *path, struct CpStore **out);

/**
 * Number of sentences in the store, 0 for a null handle.
 *
 * # Safety
 * `store` must be null or a live handle from [`cp_store_open`].
 */
size_t cp_store_len(const struct CpStore *store);

/**
 * Copy the embedding of `sentence_id` into `out` (`len` floats).
 *
 * # Safety
 * `store` must be a live handle, `sentence_id` NUL-terminated and `out`
 * writable for `len` floats.
 */
enum CpStatus cp_store_get(const struct CpStore *store,
                           const char *sentence_id,
                           float *out,
                           size_t len);

/**
 * Reshape the embedding of `sentence_id` to the 32x24 grid, written
 * row by row into `out` (768 doubles). `col_major` selects the fill order.
 *
 * # Safety
 * As [`cp_store_get`], with `out` writable for 768 doubles.
 */
enum CpStatus cp_store_grid(const struct CpStore *store,
                            const char *sentence_id,
                            bool col_major,
                            double *out);

/**
 * # Safety
 * `store` must be null or a handle from [`cp_store_open`] not yet freed.
 */
void cp_store_free(struct CpStore *store);

/**
 * Load a checkpoint written by `train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CpStatus cp_model_load(const char *path, struct CpModel **out);

/**
 * # Safety
 * `model` must be a live handle from [`cp_model_load`] and `out` writable.
 */
enum CpStatus cp_model_kind(const struct CpModel *model, enum CpModelKind *out);

/**
 * Latent size of the sentence level, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cp_model_latent_dim(const struct CpModel *model);

/**
 * Number of trainable scalars, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cp_model_param_count(const struct CpModel *model);

/**
 * Encode one 32x24 grid with the sentence encoder. `mu` and `logvar`
 * receive `latent_len` values each.
 *
 * # Safety
 * `grid` must hold `grid_len` doubles; `mu` and `logvar` must be writable
 * for `latent_len` doubles.
 */
enum CpStatus cp_model_encode(const struct CpModel *model,
                              const double *grid,
                              size_t grid_len,
                              double *mu,
                              double *logvar,
                              size_t latent_len);

/**
 * Reconstruct one grid through the sentence autoencoder (mean latent).
 *
 * # Safety
 * `grid` and `out` must each hold 768 doubles.
 */
enum CpStatus cp_model_reconstruct(const struct CpModel *model, const double *grid, double *out);

/**
 * Pick the answer a two-level model prefers. `context` holds the 7
 * context grids back to back, `answers` holds `n_answers` grids.
 *
 * # Safety
 * `context` must hold 7 * 768 doubles, `answers` `n_answers` * 768 and
 * `out_index` must be writable.
 */
enum CpStatus cp_model_predict(const struct CpModel *model,
                               const double *context,
                               const double *answers,
                               size_t n_answers,
                               size_t *out_index);

/**
 * # Safety
 * `model` must be null or a handle from [`cp_model_load`] not yet freed.
 */
void cp_model_free(struct CpModel *model);

/**
 * Run the finite-difference gradient checks. `all_passed` receives
 * whether every case stayed under its tolerance and `worst` (may be null)
 * the largest ratio of relative error to tolerance.
 *
 * # Safety
 * `all_passed` must be writable; `worst` must be null or writable.
 */
enum CpStatus cp_gradcheck(size_t instances, uint64_t seed, bool *all_passed, double *worst);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHUNKPROBE_H */
