#ifndef DPCONV_H
#define DPCONV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DpStatus {
  DP_STATUS_OK = 0,
  DP_STATUS_NULL_POINTER = 1,
  DP_STATUS_INVALID_ARGUMENT = 2,
  DP_STATUS_SHAPE = 3,
  DP_STATUS_NON_FINITE = 4,
  DP_STATUS_IO = 5,
  DP_STATUS_PANIC = 6,
} DpStatus;

/**
 * Opaque validity mask.
 */
typedef struct DpMask DpMask;

/**
 * Opaque layer stack.
 */
typedef struct DpStack DpStack;

/**
 * Geometry of one dilated partial convolution. The kernel is
 * `(2·half_height + 1) × (2·half_width + 1)`.
 */
typedef struct DpConvParams {
  size_t half_height;
  size_t half_width;
  size_t dilation;
  size_t stride;
  size_t padding;
  size_t in_channels;
  size_t out_channels;
  size_t mask_threshold;
} DpConvParams;

typedef struct DpMetrics {
  double l1_percent;
  /**
   * Positive infinity for identical inputs.
   */
  double psnr_db;
  double ssim;
} DpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dpconv_last_error(void);

/**
 * Creates a mask from `height · width` bytes; nonzero bytes are valid.
 *
 * # Safety
 * `bits` must point to `height · width` readable bytes and `out` must be
 * writable.
 */
enum DpStatus dpconv_mask_new(size_t height,
                              size_t width,
                              const uint8_t *bits,
                              struct DpMask **out);

/**
 * Generates an irregular mask with hole ratio near `ratio`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DpStatus dpconv_mask_generate(size_t height,
                                   size_t width,
                                   double ratio,
                                   uint64_t seed,
                                   struct DpMask **out);

/**
 * Releases a mask; null is ignored.
 *
 * # Safety
 * `mask` must come from this library and not be used afterwards.
 */
void dpconv_mask_free(struct DpMask *mask);

/**
 * Writes height, width and hole ratio of `mask`. Any output may be null.
 *
 * # Safety
 * `mask` must be a live handle; non-null outputs must be writable.
 */
enum DpStatus dpconv_mask_info(const struct DpMask *mask,
                               size_t *height,
                               size_t *width,
                               double *hole_ratio);

/**
 * Copies the mask bytes (0 or 1) into `buf`, which must hold exactly
 * `height · width` bytes.
 *
 * # Safety
 * `mask` must be a live handle and `buf` must point to `len` writable bytes.
 */
enum DpStatus dpconv_mask_copy(const struct DpMask *mask, uint8_t *buf, size_t len);

/**
 * Applies one mask update with the geometry in `params`.
 *
 * # Safety
 * `mask` must be a live handle, `params` readable and `out` writable.
 */
enum DpStatus dpconv_mask_update(const struct DpMask *mask,
                                 const struct DpConvParams *params,
                                 struct DpMask **out);

/**
 * Builds a stack from a definition such as `"3 3 3 3 | 3d2 3d4 3d8"`:
 * odd kernel size with optional `d`, `s`, `p`, `t` parts, `|` starting a
 * repeating cycle. `depth` is the number of layers to expand a cycle to.
 *
 * # Safety
 * `name` and `definition` must be NUL-terminated strings; `out` writable.
 */
enum DpStatus dpconv_stack_parse(const char *name,
                                 const char *definition,
                                 size_t depth,
                                 struct DpStack **out);

/**
 * Reference stacks: `dilated == 0` gives repeated 3×3 layers, otherwise four
 * 3×3 layers followed by dilations 2, 4, 8 repeating up to `depth`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DpStatus dpconv_stack_reference(int32_t dilated, size_t depth, struct DpStack **out);

/**
 * Releases a stack; null is ignored.
 *
 * # Safety
 * `stack` must come from this library and not be used afterwards.
 */
void dpconv_stack_free(struct DpStack *stack);

/**
 * Runs up to `cap` mask updates. `layers` receives the layers needed to
 * reach a hole-free mask, or -1 when the cap is hit. If `coverage` is
 * non-null, the valid fraction after each applied layer is written to it
 * (at most `coverage_len` values) and `coverage_written` gets the count.
 *
 * # Safety
 * Handles must be live; `layers` writable; `coverage` must point to
 * `coverage_len` writable doubles when non-null.
 */
enum DpStatus dpconv_propagate(const struct DpStack *stack,
                               const struct DpMask *mask,
                               size_t cap,
                               int64_t *layers,
                               double *coverage,
                               size_t coverage_len,
                               size_t *coverage_written);

/**
 * Output spatial size of one layer for an `height × width` input.
 *
 * # Safety
 * `params` readable; `out_height` and `out_width` writable.
 */
enum DpStatus dpconv_output_dims(const struct DpConvParams *params,
                                 size_t height,
                                 size_t width,
                                 size_t *out_height,
                                 size_t *out_width);

/**
 * Dilated partial convolution forward pass over a batch.
 *
 * `input` is `(batch, in_channels, height, width)`, `masks` holds
 * `batch · height · width` bytes, `weights` is
 * `(out_channels, in_channels, kh, kw)` and `bias` has `out_channels`
 * entries (may be null for zero bias). `output` receives
 * `(batch, out_channels, oh, ow)` values and `out_masks`, if non-null,
 * `batch · oh · ow` bytes; see [`dpconv_output_dims`].
 *
 * # Safety
 * Every non-null pointer must reference a buffer of the stated length.
 */
enum DpStatus dpconv_forward(const struct DpConvParams *params,
                             size_t batch,
                             size_t height,
                             size_t width,
                             const double *input,
                             const uint8_t *masks,
                             const double *weights,
                             const double *bias,
                             double *output,
                             size_t output_len,
                             uint8_t *out_masks,
                             size_t out_masks_len);

/**
 * ℓ1 %, PSNR (peak 1) and SSIM of two `(batch, channels, height, width)`
 * buffers with values in `[0, 1]`.
 *
 * # Safety
 * `a` and `b` must each hold the stated number of values; `out` writable.
 */
enum DpStatus dpconv_metrics(size_t batch,
                             size_t channels,
                             size_t height,
                             size_t width,
                             const double *a,
                             const double *b,
                             struct DpMetrics *out);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dpconv_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPCONV_H */
