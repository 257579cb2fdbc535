#ifndef LFDF_H
#define LFDF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfdfStatus {
  LFDF_STATUS_OK = 0,
  LFDF_STATUS_NULL_POINTER = 1,
  LFDF_STATUS_INVALID_ARGUMENT = 2,
  LFDF_STATUS_SHAPE = 3,
  LFDF_STATUS_CONFIG = 4,
  LFDF_STATUS_IO = 5,
  LFDF_STATUS_CHECKPOINT = 6,
  LFDF_STATUS_MISSING = 7,
  LFDF_STATUS_DIVERGED = 8,
  LFDF_STATUS_PANIC = 9,
} LfdfStatus;

/**
 * A network with its weights.
 */
typedef struct LfdfModel LfdfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *lfdf_last_error(void);

/**
 * Library version as a static string.
 */
const char *lfdf_version(void);

/**
 * Builds a network from a JSON network configuration (null or `"{}"` for
 * defaults) with seeded initial weights.
 *
 * # Safety
 * `config_json` is null or a nul-terminated string; `out` is writable.
 */
enum LfdfStatus lfdf_model_new(const char *config_json, uint64_t seed, struct LfdfModel **out);

/**
 * Loads a checkpoint written by the trainer (`.json` or `.bin` path).
 *
 * # Safety
 * `path` is a nul-terminated string; `out` is writable.
 */
enum LfdfStatus lfdf_model_load(const char *path, struct LfdfModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` came from this library and is not used afterwards.
 */
void lfdf_model_free(struct LfdfModel *model);

/**
 * Angular size `A`, scale `alpha` and trainable scalar count.
 *
 * # Safety
 * `model` is a live handle; each non-null output is writable.
 */
enum LfdfStatus lfdf_model_info(const struct LfdfModel *model,
                                size_t *angular,
                                size_t *alpha,
                                size_t *num_params);

/**
 * Super-resolves a Y light field stored `[A, A, h, w]` row-major in
 * `[0, 1]`; `output` receives `[A, A, alpha h, alpha w]` and must hold
 * `output_len` values.
 *
 * # Safety
 * `input` holds `A * A * h * w` doubles; `output` holds `output_len`.
 */
enum LfdfStatus lfdf_model_forward(const struct LfdfModel *model,
                                   const double *input,
                                   size_t h,
                                   size_t w,
                                   double *output,
                                   size_t output_len);

/**
 * PSNR in dB (peak 1) of two `h x w` images; `+inf` when identical.
 *
 * # Safety
 * `a` and `b` hold `h * w` doubles; `out` is writable.
 */
enum LfdfStatus lfdf_psnr(const double *a, const double *b, size_t h, size_t w, double *out);

/**
 * Mean SSIM of two `h x w` images.
 *
 * # Safety
 * `a` and `b` hold `h * w` doubles; `out` is writable.
 */
enum LfdfStatus lfdf_ssim(const double *a, const double *b, size_t h, size_t w, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LFDF_H */
