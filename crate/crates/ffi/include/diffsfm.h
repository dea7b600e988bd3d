#ifndef DIFFSFM_H
#define DIFFSFM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsfmStatus {
  DSFM_STATUS_OK = 0,
  DSFM_STATUS_NULL_POINTER = 1,
  DSFM_STATUS_INVALID_ARGUMENT = 2,
  DSFM_STATUS_SHAPE_MISMATCH = 3,
  DSFM_STATUS_DOMAIN_ERROR = 4,
  DSFM_STATUS_NUMERICAL_FAILURE = 5,
  DSFM_STATUS_NO_VISIBLE_PIXELS = 6,
  DSFM_STATUS_IO_ERROR = 7,
  DSFM_STATUS_FORMAT_ERROR = 8,
  DSFM_STATUS_CONFIG_ERROR = 9,
  DSFM_STATUS_PANIC = 10,
} DsfmStatus;

typedef enum DsfmAblation {
  DSFM_ABLATION_BASELINE = 0,
  DSFM_ABLATION_CAMERA = 1,
  DSFM_ABLATION_CAMERA_COST_VOLUME = 2,
} DsfmAblation;

/**
 * The outcome of a joint recovery.
 */
typedef struct DsfmRecovery DsfmRecovery;

/**
 * A rendered synthetic sequence.
 */
typedef struct DsfmSequence DsfmSequence;

/**
 * Opaque dense `f64` tensor, row-major.
 */
typedef struct DsfmTensor DsfmTensor;

/**
 * Rigid motion as an axis-angle rotation followed by a translation.
 */
typedef struct DsfmPose {
  double rotation[3];
  double translation[3];
} DsfmPose;

/**
 * Normalized pinhole intrinsics: focal lengths and principal point as
 * fractions of the image width and height.
 */
typedef struct DsfmIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
} DsfmIntrinsics;

typedef struct DsfmDepthMetrics {
  double abs_rel;
  double sq_rel;
  double rmse;
  double rmse_log;
  double delta1;
  double delta2;
  double delta3;
  size_t n_valid;
} DsfmDepthMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dsfm_version(void);

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *dsfm_last_error_message(void);

/**
 * Copies `data` (product of `shape` elements) into a new tensor.
 *
 * # Safety
 * `data` must point to as many readable `f64` as the product of the `ndim`
 * entries of `shape`; `out` must be writable.
 */
enum DsfmStatus dsfm_tensor_new(const double *data,
                                const size_t *shape,
                                size_t ndim,
                                struct DsfmTensor **out);

/**
 * Releases a tensor; null is ignored.
 *
 * # Safety
 * `t` must be null or a handle returned by this library and not yet freed.
 */
void dsfm_tensor_free(struct DsfmTensor *t);

/**
 * Number of dimensions; 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t dsfm_tensor_ndim(const struct DsfmTensor *t);

/**
 * Number of elements; 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t dsfm_tensor_len(const struct DsfmTensor *t);

/**
 * Copies the shape into `out` (capacity `cap` entries).
 *
 * # Safety
 * `t` must be a live handle and `out` writable for `cap` entries.
 */
enum DsfmStatus dsfm_tensor_shape(const struct DsfmTensor *t, size_t *out, size_t cap);

/**
 * Borrowed pointer to the row-major data, valid while the handle lives.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
const double *dsfm_tensor_data(const struct DsfmTensor *t);

/**
 * Pixel coordinates in the source view of every target pixel (`H x W x 2`)
 * and their validity (`H x W`, 1 where the point is in front of both
 * cameras).
 *
 * # Safety
 * Handles must be live; `pose`, `intr` readable; `out_coords` and
 * `out_valid` writable.
 */
enum DsfmStatus dsfm_warp_coords(const struct DsfmTensor *depth,
                                 const struct DsfmPose *pose,
                                 const struct DsfmIntrinsics *intr,
                                 struct DsfmTensor **out_coords,
                                 struct DsfmTensor **out_valid);

/**
 * Reconstructs the target view from `source` (`H x W x C`) given the
 * target depth, the target-to-source pose and the intrinsics. Also returns
 * the `H x W` in-view mask.
 *
 * # Safety
 * Handles must be live; `pose`, `intr` readable; outputs writable.
 */
enum DsfmStatus dsfm_synthesize_target(const struct DsfmTensor *source,
                                       const struct DsfmTensor *depth,
                                       const struct DsfmPose *pose,
                                       const struct DsfmIntrinsics *intr,
                                       struct DsfmTensor **out_image,
                                       struct DsfmTensor **out_mask);

/**
 * Photometric data term between `target` and one `synthesized` view with
 * its `H x W` mask, mixing SSIM and L1 with weight `alpha`.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DsfmStatus dsfm_data_fidelity(const struct DsfmTensor *target,
                                   const struct DsfmTensor *synthesized,
                                   const struct DsfmTensor *mask,
                                   double alpha,
                                   double *out);

/**
 * `pred` rescaled so its median over pixels with `gt > 0` matches `gt`.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DsfmStatus dsfm_median_scale(const struct DsfmTensor *pred,
                                  const struct DsfmTensor *gt,
                                  struct DsfmTensor **out);

/**
 * Depth metrics over pixels with `gt > 0`, both maps clamped to
 * `[1e-3, cap]`. Median-scale `pred` first.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DsfmStatus dsfm_depth_metrics(const struct DsfmTensor *pred,
                                   const struct DsfmTensor *gt,
                                   double cap,
                                   struct DsfmDepthMetrics *out);

/**
 * Reads a PFM float map (`H x W` or `H x W x 3`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum DsfmStatus dsfm_read_pfm(const char *path, struct DsfmTensor **out);

/**
 * Writes a PFM float map.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `t` a live handle.
 */
enum DsfmStatus dsfm_write_pfm(const char *path, const struct DsfmTensor *t);

/**
 * Reads a binary PPM image as `H x W x 3` values in `[0, 1]`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum DsfmStatus dsfm_read_ppm(const char *path, struct DsfmTensor **out);

/**
 * Writes an image with values in `[0, 1]` as 8-bit binary PPM.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `t` a live handle.
 */
enum DsfmStatus dsfm_write_ppm(const char *path, const struct DsfmTensor *t);

/**
 * Renders the scene and trajectory of an experiment configuration (JSON;
 * null for defaults).
 *
 * # Safety
 * `config_json` must be null or NUL-terminated; `out` writable.
 */
enum DsfmStatus dsfm_render_sequence(const char *config_json, struct DsfmSequence **out);

/**
 * Number of frames; 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t dsfm_sequence_len(const struct DsfmSequence *s);

/**
 * Copies frame `k` (`H x W x C`) and its depth map (`H x W`).
 *
 * # Safety
 * `s` must be a live handle; outputs writable (either may be null to skip).
 */
enum DsfmStatus dsfm_sequence_frame(const struct DsfmSequence *s,
                                    size_t k,
                                    struct DsfmTensor **out_image,
                                    struct DsfmTensor **out_depth);

/**
 * Motion from frame `k` to frame `k + 1`.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum DsfmStatus dsfm_sequence_motion(const struct DsfmSequence *s, size_t k, struct DsfmPose *out);

/**
 * Releases a sequence; null is ignored.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
void dsfm_sequence_free(struct DsfmSequence *s);

/**
 * Joint depth, ego-motion and (except for the baseline arm) intrinsics
 * recovery over `n_frames` frames, configured by `config_json` (null for
 * defaults). `given` holds the intrinsics the baseline arm is frozen at and
 * is required for it.
 *
 * # Safety
 * `frames` must point to `n_frames` live handles; `config_json` null or
 * NUL-terminated; `given` null or readable; `out` writable.
 */
enum DsfmStatus dsfm_recover(const struct DsfmTensor *const *frames,
                             size_t n_frames,
                             const char *config_json,
                             enum DsfmAblation ablation,
                             const struct DsfmIntrinsics *given,
                             struct DsfmRecovery **out);

/**
 * Number of recovered target frames (frames after the first).
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t dsfm_recovery_len(const struct DsfmRecovery *r);

/**
 * Recovered depth of frame `k + 1`.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum DsfmStatus dsfm_recovery_depth(const struct DsfmRecovery *r,
                                    size_t k,
                                    struct DsfmTensor **out);

/**
 * Recovered motion from frame `k` to frame `k + 1`.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum DsfmStatus dsfm_recovery_motion(const struct DsfmRecovery *r, size_t k, struct DsfmPose *out);

/**
 * Recovered (or, for the baseline arm, given) intrinsics.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum DsfmStatus dsfm_recovery_intrinsics(const struct DsfmRecovery *r, struct DsfmIntrinsics *out);

/**
 * Objective at the last recorded step; NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double dsfm_recovery_final_objective(const struct DsfmRecovery *r);

/**
 * Releases a recovery; null is ignored.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
void dsfm_recovery_free(struct DsfmRecovery *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFSFM_H */
