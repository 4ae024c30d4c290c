#ifndef SINEDELTA_H
#define SINEDELTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_INPUT = 2,
  SD_STATUS_DOMAIN = 3,
  SD_STATUS_NUMERIC = 4,
  SD_STATUS_CORRUPT_DATA = 5,
  SD_STATUS_IO = 6,
  /*
   The library panicked; the handle arguments should be considered unusable.
   */
  SD_STATUS_PANIC = 7,
} SdStatus;

/*
 Delta activation.
 */
typedef enum SdFlavor {
  SD_FLAVOR_PLAIN = 0,
  SD_FLAVOR_SINE = 1,
} SdFlavor;

/*
 Interpolation scheme for Bjøntegaard-Delta metrics.
 */
typedef enum SdInterpolator {
  SD_INTERPOLATOR_AKIMA = 0,
  SD_INTERPOLATOR_CUBIC_FIT = 1,
} SdInterpolator;

/*
 Compressed adapter container.
 */
typedef struct SdAdapter SdAdapter;

/*
 Dense row-major matrix of doubles.
 */
typedef struct SdMatrix SdMatrix;

/*
 One tensor quantized against its own codebook.
 */
typedef struct SdQuantized SdQuantized;

/*
 Both BD metrics for one pair of curves.
 */
typedef struct SdBdResult {
  /*
   Percent rate change at equal quality.
   */
  double bd_rate;
  /*
   Mean quality change at equal rate.
   */
  double bd_quality;
} SdBdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the most recent failure on this thread, or null if none.
 The pointer stays valid until the next failing call on this thread.
 */
const char *sd_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *sd_version(void);

/*
 Copies `rows * cols` row-major values into a new matrix.

 # Safety
 `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum SdStatus sd_matrix_new(size_t rows, size_t cols, const double *data, struct SdMatrix **out);

/*
 # Safety
 `m` must be null or a handle from this library not yet freed.
 */
void sd_matrix_free(struct SdMatrix *m);

/*
 # Safety
 `m` must be a live handle; `rows` and `cols` must be writable.
 */
enum SdStatus sd_matrix_shape(const struct SdMatrix *m, size_t *rows, size_t *cols);

/*
 Copies the row-major values into `buf`, which must hold `rows * cols`.

 # Safety
 `m` must be a live handle; `buf` must have room for `len` doubles.
 */
enum SdStatus sd_matrix_copy_data(const struct SdMatrix *m, double *buf, size_t len);

/*
 # Safety
 `a` and `b` must be live handles; `out` must be writable.
 */
enum SdStatus sd_matmul(const struct SdMatrix *a, const struct SdMatrix *b, struct SdMatrix **out);

/*
 `‖M‖_F² / σ_max²`. Fails with `Domain` on the zero matrix.

 # Safety
 `m` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_stable_rank(const struct SdMatrix *m, double *out);

/*
 # Safety
 `m` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_sigma_max(const struct SdMatrix *m, double *out);

/*
 Quantizes a matrix with an optimal codebook of at most `2^bits` levels.

 # Safety
 `m` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_quantize(const struct SdMatrix *m, uint8_t bits, struct SdQuantized **out);

/*
 # Safety
 `q` must be null or a handle from this library not yet freed.
 */
void sd_quantized_free(struct SdQuantized *q);

/*
 Number of codebook levels actually used.

 # Safety
 `q` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_quantized_levels(const struct SdQuantized *q, size_t *out);

/*
 # Safety
 `q` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_dequantize(const struct SdQuantized *q, struct SdMatrix **out);

/*
 Weight delta from quantized factors. A non-positive `gamma` selects the
 default `√n`.

 # Safety
 `qa` and `qb` must be live handles; `out` must be writable.
 */
enum SdStatus sd_reconstruct_delta(const struct SdQuantized *qa,
                                   const struct SdQuantized *qb,
                                   enum SdFlavor flavor_,
                                   double omega,
                                   double gamma,
                                   struct SdMatrix **out);

/*
 Parses and validates a container held in memory.

 # Safety
 `bytes` must point to `len` readable bytes; `out` must be writable.
 */
enum SdStatus sd_adapter_from_bytes(const uint8_t *bytes, size_t len, struct SdAdapter **out);

/*
 # Safety
 `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum SdStatus sd_adapter_load(const char *path, struct SdAdapter **out);

/*
 # Safety
 `a` must be a live handle; `path` must be a NUL-terminated UTF-8 string.
 */
enum SdStatus sd_adapter_save(const struct SdAdapter *a, const char *path);

/*
 Serializes into `buf`. Call with a null `buf` to learn the size through
 `written`; a buffer that is too small fails with `InvalidInput` and still
 reports the required size.

 # Safety
 `a` must be a live handle; `buf` must be null or have room for `cap`
 bytes; `written` must be writable.
 */
enum SdStatus sd_adapter_to_bytes(const struct SdAdapter *a,
                                  uint8_t *buf,
                                  size_t cap,
                                  size_t *written);

/*
 # Safety
 `a` must be null or a handle from this library not yet freed.
 */
void sd_adapter_free(struct SdAdapter *a);

/*
 Number of named tensors in the container.

 # Safety
 `a` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_adapter_tensor_count(const struct SdAdapter *a, size_t *out);

/*
 Serialized size in bytes.

 # Safety
 `a` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_adapter_footprint(const struct SdAdapter *a, size_t *out);

/*
 Copy of the tensor stored under `name`.

 # Safety
 `a` must be a live handle; `name` must be a NUL-terminated UTF-8 string;
 `out` must be writable.
 */
enum SdStatus sd_adapter_tensor(const struct SdAdapter *a,
                                const char *name,
                                struct SdQuantized **out);

/*
 Delta for `layer` from `<layer>.A` and `<layer>.B`, using the flavor,
 frequency and gamma rule recorded in the container.

 # Safety
 `a` must be a live handle; `layer` must be a NUL-terminated UTF-8 string;
 `out` must be writable.
 */
enum SdStatus sd_adapter_layer_delta(const struct SdAdapter *a,
                                     const char *layer,
                                     struct SdMatrix **out);

/*
 BD-rate and BD-quality of `test` against `anchor`. Each curve needs at
 least four points with positive rates.

 # Safety
 Each array must hold its curve's point count of readable doubles; `out`
 must be writable.
 */
enum SdStatus sd_bd_compare(const double *anchor_rates,
                            const double *anchor_qualities,
                            size_t anchor_len,
                            const double *test_rates,
                            const double *test_qualities,
                            size_t test_len,
                            enum SdInterpolator method,
                            struct SdBdResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SINEDELTA_H */
