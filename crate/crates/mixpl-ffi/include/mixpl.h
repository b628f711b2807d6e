#ifndef MIXPL_H
#define MIXPL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MixplStatus {
  MixplOk = 0,
  MixplNullArgument = 1,
  MixplInvalidArgument = 2,
  MixplIoError = 3,
  MixplParseError = 4,
  MixplValidationError = 5,
  MixplComposeError = 6,
  MixplInternalError = 7,
} MixplStatus;

/**
 * Opaque dataset handle.
 */
typedef struct MixplDataset MixplDataset;

/**
 * Opaque raster handle (8-bit RGB, row-major).
 */
typedef struct MixplRaster MixplRaster;

/**
 * A detection in corner form with category id and confidence.
 */
typedef struct MixplDetection {
  double x1;
  double y1;
  double x2;
  double y2;
  uint32_t category;
  double score;
} MixplDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. Valid until the next
 * failing call; never null.
 */
const char *mixpl_last_error(void);

/**
 * Library version as a static string.
 */
const char *mixpl_version(void);

/**
 * Intersection-over-union of two corner-form boxes; -1 on invalid geometry.
 */
double mixpl_iou(double ax1,
                 double ay1,
                 double ax2,
                 double ay2,
                 double bx1,
                 double by1,
                 double bx2,
                 double by2);

/**
 * COCO scale class of a box: 0 small, 1 medium, 2 large; -1 on invalid
 * geometry.
 */
int32_t mixpl_area_class(double x1, double y1, double x2, double y2);

/**
 * Classification gradient magnitude `|p - p*|`.
 */
double mixpl_gradient_norm(double p, double p_star);

/**
 * Binary cross entropy with probability clamping.
 */
double mixpl_bce_loss(double p, double p_star);

/**
 * In-place EMA update of `teacher` toward `student`.
 *
 * # Safety
 * `teacher` and `student` must point to `len` readable (and for `teacher`,
 * writable) doubles.
 */
enum MixplStatus mixpl_ema_update(double *teacher,
                                  const double *student,
                                  uintptr_t len,
                                  double momentum);

/**
 * Keep detections scoring at or above `thr`, compacting in place.
 *
 * # Safety
 * `dets` must point to `len` detections; `kept` must be writable.
 */
enum MixplStatus mixpl_filter_by_threshold(struct MixplDetection *dets,
                                           uintptr_t len,
                                           double thr,
                                           uintptr_t *kept);

/**
 * Load a COCO annotation document.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum MixplStatus mixpl_dataset_load(const char *path, struct MixplDataset **out);

/**
 * Generate a procedural dataset.
 *
 * # Safety
 * `out` must be writable.
 */
enum MixplStatus mixpl_dataset_synthetic(uintptr_t num_images,
                                         uint32_t num_categories,
                                         uint64_t seed,
                                         struct MixplDataset **out);

/**
 * Number of images in the dataset; 0 for a null handle.
 *
 * # Safety
 * `ds` must be a live dataset handle or null.
 */
uintptr_t mixpl_dataset_len(const struct MixplDataset *ds);

/**
 * Random labeled/unlabeled partition; both handles must be freed.
 *
 * # Safety
 * `ds` must be a live dataset handle; both out-pointers must be writable.
 */
enum MixplStatus mixpl_dataset_split(const struct MixplDataset *ds,
                                     double fraction,
                                     uint64_t seed,
                                     struct MixplDataset **labeled,
                                     struct MixplDataset **unlabeled);

/**
 * Category-level repeat factor `1 / f(c)^power` over a labeled split.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable.
 */
enum MixplStatus mixpl_repeat_factor(const struct MixplDataset *ds,
                                     uint32_t category,
                                     double power,
                                     double *out);

/**
 * # Safety
 * `ds` must be null or a handle produced by this library, freed once.
 */
void mixpl_dataset_free(struct MixplDataset *ds);

/**
 * Wrap `w x h x 3` RGB samples into a raster handle.
 *
 * # Safety
 * `rgb` must hold `w * h * 3` readable bytes; `out` must be writable.
 */
enum MixplStatus mixpl_raster_create(uint32_t w,
                                     uint32_t h,
                                     const uint8_t *rgb,
                                     struct MixplRaster **out);

/**
 * # Safety
 * `r` must be a live raster handle or null.
 */
uint32_t mixpl_raster_width(const struct MixplRaster *r);

/**
 * # Safety
 * `r` must be a live raster handle or null.
 */
uint32_t mixpl_raster_height(const struct MixplRaster *r);

/**
 * Copy the raster samples out; `dst_len` must be at least `w * h * 3`.
 *
 * # Safety
 * `r` must be a live raster handle; `dst` must hold `dst_len` writable bytes.
 */
enum MixplStatus mixpl_raster_copy_data(const struct MixplRaster *r,
                                        uint8_t *dst,
                                        uintptr_t dst_len);

/**
 * # Safety
 * `r` must be null or a handle produced by this library, freed once.
 */
void mixpl_raster_free(struct MixplRaster *r);

/**
 * Pixel-wise blend of two pseudo-labeled images with label union. Writes up
 * to `out_cap` labels; fails when the union does not fit.
 *
 * # Safety
 * Raster handles must be live; label pointers must hold their stated counts;
 * `out_raster`, `out_labels`, and `out_len` must be writable.
 */
enum MixplStatus mixpl_pseudo_mixup(const struct MixplRaster *a,
                                    const struct MixplDetection *labels_a,
                                    uintptr_t len_a,
                                    const struct MixplRaster *b,
                                    const struct MixplDetection *labels_b,
                                    uintptr_t len_b,
                                    double alpha,
                                    struct MixplRaster **out_raster,
                                    struct MixplDetection *out_labels,
                                    uintptr_t out_cap,
                                    uintptr_t *out_len);

/**
 * Compose four pseudo-labeled images into one mosaic. Label output follows
 * the mixup call's convention; `dropped` reports degenerate clips.
 *
 * # Safety
 * `rasters` must point to 4 live raster handles, `labels`/`lens` to 4 label
 * buffers and their counts; out-pointers must be writable.
 */
enum MixplStatus mixpl_pseudo_mosaic(const struct MixplRaster *const *rasters,
                                     const struct MixplDetection *const *labels,
                                     const uintptr_t *lens,
                                     uint32_t range_lo,
                                     uint32_t range_hi,
                                     uint64_t seed,
                                     struct MixplRaster **out_raster,
                                     struct MixplDetection *out_labels,
                                     uintptr_t out_cap,
                                     uintptr_t *out_len,
                                     uintptr_t *dropped);

/**
 * Number of detections surviving threshold filtering without mutating the
 * input (convenience for sizing buffers).
 *
 * # Safety
 * `dets` must hold `len` readable detections.
 */
uintptr_t mixpl_count_above_threshold(const struct MixplDetection *dets, uintptr_t len, double thr);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MIXPL_H */
