#ifndef SWIFTVAD_H
#define SWIFTVAD_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvStatus {
  SV_STATUS_OK = 0,
  SV_STATUS_NULL_POINTER = 1,
  SV_STATUS_INVALID_ARGUMENT = 2,
  SV_STATUS_CONFIG = 3,
  SV_STATUS_IO = 4,
  SV_STATUS_FORMAT = 5,
  SV_STATUS_SHAPE = 6,
  SV_STATUS_NUMERIC = 7,
  SV_STATUS_RUNTIME = 8,
  SV_STATUS_PANIC = 9,
} SvStatus;

/**
 * A student model behind an opaque pointer.
 */
typedef struct SvModel SvModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *sv_last_error_message(void);

/**
 * Builds a freshly initialised student. `config_json` holds a model config
 * object; null selects the defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
enum SvStatus sv_model_create(const char *config_json, uint64_t seed, struct SvModel **out);

/**
 * Builds a student and loads a `student.ckpt` checkpoint into it.
 *
 * # Safety
 * As [`sv_model_create`]; `checkpoint_path` must be a NUL-terminated string.
 */
enum SvStatus sv_model_load(const char *config_json,
                            const char *checkpoint_path,
                            struct SvModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void sv_model_free(struct SvModel *model);

/**
 * Number of floats one input sample holds: frames x channels x height x width.
 *
 * # Safety
 * `model` must be null or a live handle. Null yields 0.
 */
size_t sv_model_input_len(const struct SvModel *model);

/**
 * Total floats of all anomaly maps of one sample, heads in config order.
 *
 * # Safety
 * `model` must be null or a live handle. Null yields 0.
 */
size_t sv_model_maps_len(const struct SvModel *model);

/**
 * Runs one sample in eval mode and writes its anomaly maps, concatenated
 * row-major in head order, to `maps_out`.
 *
 * # Safety
 * `input` must point to `input_len` floats and `maps_out` to `maps_len`.
 */
enum SvStatus sv_model_forward(const struct SvModel *model,
                               const float *input,
                               size_t input_len,
                               float *maps_out,
                               size_t maps_len);

/**
 * Frame anomaly score of one sample: the mean of the per-head maxima.
 *
 * # Safety
 * `input` must point to `input_len` floats; `score_out` must be valid.
 */
enum SvStatus sv_model_score(const struct SvModel *model,
                             const float *input,
                             size_t input_len,
                             double *score_out);

/**
 * Area under the ROC curve with tie-aware ranking. Labels are 0 or 1.
 *
 * # Safety
 * `scores` and `labels` must each point to `n` elements.
 */
enum SvStatus sv_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *auc_out);

/**
 * Writes a `height x width` map as an AMAP file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `data` must hold
 * `height * width` floats.
 */
enum SvStatus sv_amap_write(const char *path, const float *data, size_t height, size_t width);

/**
 * Reads an AMAP file. The dimensions are always written; pass a null `out`
 * to query them. Otherwise `capacity` must be at least `height * width`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `height_out` and `width_out` must
 * be valid; `out`, when not null, must hold `capacity` floats.
 */
enum SvStatus sv_amap_read(const char *path,
                           float *out,
                           size_t capacity,
                           size_t *height_out,
                           size_t *width_out);

/**
 * Runs a pipeline command (`gen`, `pretrain`, `distill`, `eval`, `bench`,
 * `ablate`) from a JSON config file. A negative `seed` keeps the configured
 * one; a null `out_dir` keeps the configured output root.
 *
 * # Safety
 * `command` and `config_path` must be NUL-terminated strings; `out_dir`
 * must be null or one.
 */
enum SvStatus sv_run_command(const char *command,
                             const char *config_path,
                             int64_t seed,
                             const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWIFTVAD_H */
