#ifndef GLEASON_ENGINE_H
#define GLEASON_ENGINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of tissue classes; length of the array filled by
// [`ge_mask_class_areas`].
#define GE_CLASS_COUNT 7

typedef enum GeStatus {
  GE_STATUS_OK = 0,
  GE_STATUS_NULL_POINTER = 1,
  GE_STATUS_INVALID_ARGUMENT = 2,
  GE_STATUS_IO = 3,
  GE_STATUS_FORMAT = 4,
  // The mask holds no epithelium.
  GE_STATUS_UNGRADEABLE = 5,
  // A statistic is undefined for the given data.
  GE_STATUS_UNDEFINED = 6,
  GE_STATUS_PANIC = 7,
} GeStatus;

typedef enum GeProfile {
  GE_PROFILE_BIOPSY = 0,
  GE_PROFILE_TMA = 1,
} GeProfile;

// Opaque run-length encoded label mask.
typedef struct GeMask GeMask;

// Flattened diagnosis. Benign cases have `malignant == 0` and zero grades;
// `tertiary` is 0 when absent.
typedef struct GeDiagnosis {
  uint8_t malignant;
  uint8_t primary;
  uint8_t secondary;
  uint8_t tertiary;
  uint8_t grade_group;
  double pct_benign;
  double pct_g3;
  double pct_g4;
  double pct_g5;
  double tumor_fraction;
  double malignancy_score;
  double aggressiveness_score;
} GeDiagnosis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *ge_last_error_message(void);

// Library version as a static nul-terminated string.
const char *ge_version(void);

// Encodes `width * height` class codes (row-major) into a new mask.
//
// # Safety
// `codes` must point to `width * height` bytes; `out` must be writable.
enum GeStatus ge_mask_from_raw(const uint8_t *codes,
                               uint32_t width,
                               uint32_t height,
                               double spacing_um,
                               struct GeMask **out);

// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum GeStatus ge_mask_read_pgm(const char *path, struct GeMask **out);

// # Safety
// `mask` must be a live handle; `path` a nul-terminated string.
enum GeStatus ge_mask_write_pgm(const struct GeMask *mask, const char *path);

// Releases a mask. Null is ignored.
//
// # Safety
// `mask` must be null or a handle not yet freed.
void ge_mask_free(struct GeMask *mask);

// # Safety
// `mask` must be a live handle; `width` and `height` writable.
enum GeStatus ge_mask_dims(const struct GeMask *mask, uint32_t *width, uint32_t *height);

// Pixel count per class code into `out[0..GE_CLASS_COUNT]`.
//
// # Safety
// `mask` must be a live handle; `out` must hold `len` writable values.
enum GeStatus ge_mask_class_areas(const struct GeMask *mask, uint64_t *out, size_t len);

// Number of same-class components of glandular pixels; `neighbours` is
// 4 or 8.
//
// # Safety
// `mask` must be a live handle; `out` writable.
enum GeStatus ge_mask_component_count(const struct GeMask *mask,
                                      uint32_t neighbours,
                                      uint64_t *out);

// # Safety
// `mask` must be a live handle; `out` writable.
enum GeStatus ge_grade_mask(const struct GeMask *mask,
                            enum GeProfile profile,
                            struct GeDiagnosis *out);

// Applies the threshold rules to epithelial fractions summing to one.
//
// # Safety
// `out` must be writable.
enum GeStatus ge_diagnose(double pct_benign,
                          double pct_g3,
                          double pct_g4,
                          double pct_g5,
                          enum GeProfile profile,
                          struct GeDiagnosis *out);

// Quadratic-weighted kappa of two raters over categories `0..k`.
//
// # Safety
// `a` and `b` must each hold `n` values; `out` writable.
enum GeStatus ge_quadratic_kappa(const uint8_t *a,
                                 const uint8_t *b,
                                 size_t n,
                                 uint8_t k,
                                 double *out);

// Area under the ROC curve; `truth[i]` nonzero marks a positive.
//
// # Safety
// `scores` and `truth` must each hold `n` values; `out` writable.
enum GeStatus ge_roc_auc(const double *scores, const uint8_t *truth, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLEASON_ENGINE_H */
