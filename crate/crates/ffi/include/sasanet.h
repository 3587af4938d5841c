#ifndef SASANET_H
#define SASANET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SasanetStatus {
  SASANET_STATUS_OK = 0,
  SASANET_STATUS_NULL_POINTER = 1,
  SASANET_STATUS_INVALID_ARGUMENT = 2,
  SASANET_STATUS_IO = 3,
  SASANET_STATUS_CHECKPOINT = 4,
  SASANET_STATUS_RUNTIME = 5,
  SASANET_STATUS_PANIC = 6,
} SasanetStatus;

/**
 * A loaded model.
 */
typedef struct SasanetHandle SasanetHandle;

/**
 * Loads a checkpoint written by `sasanet train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer to
 * writable storage for one handle pointer.
 */
enum SasanetStatus sasanet_model_load(const char *path, struct SasanetHandle **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`sasanet_model_load`] and not have been freed.
 */
void sasanet_model_free(struct SasanetHandle *model);

/**
 * Number of features `N` the model was trained on.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SasanetStatus sasanet_model_num_features(const struct SasanetHandle *model, size_t *out);

/**
 * The bias `φ₀`, the output on the empty subset (link units).
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SasanetStatus sasanet_model_bias(const struct SasanetHandle *model, double *out);

/**
 * Self-attribution of the observed features `subset` of `x`.
 *
 * `x` holds all `N` feature values; entries outside `subset` are ignored.
 * `phi_out` receives `N` values, zero for unobserved features. If
 * `f_out` is non-null it receives the output `φ₀ + Σ φ_i` in link units.
 *
 * # Safety
 * `x` must hold `n_x` values, `subset` `n_subset` ids and `phi_out` room
 * for `N` values.
 */
enum SasanetStatus sasanet_attribute(const struct SasanetHandle *model,
                                     const double *x,
                                     size_t n_x,
                                     const size_t *subset,
                                     size_t n_subset,
                                     double *phi_out,
                                     double *f_out);

/**
 * Prediction on the observed features `subset` of `x`, after the link
 * (a probability for classification models).
 *
 * # Safety
 * As for [`sasanet_attribute`]; `out` must be writable.
 */
enum SasanetStatus sasanet_predict(const struct SasanetHandle *model,
                                   const double *x,
                                   size_t n_x,
                                   const size_t *subset,
                                   size_t n_subset,
                                   double *out);

/**
 * Cumulative outputs `φ₀, φ₀ + Δ_1, …` of the sequential module while
 * features join in `order`; `out` receives `n_order + 1` values.
 *
 * # Safety
 * `x` must hold `n_x` values, `order` `n_order` ids and `out` room for
 * `n_order + 1` values.
 */
enum SasanetStatus sasanet_prefix_values(const struct SasanetHandle *model,
                                         const double *x,
                                         size_t n_x,
                                         const size_t *order,
                                         size_t n_order,
                                         double *out);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full message length
 * excluding the NUL. Returns 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must have room for `len` bytes, or be null with `len == 0`.
 */
size_t sasanet_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sasanet_version(void);

#endif  /* SASANET_H */
