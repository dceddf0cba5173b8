#ifndef FIELDSHIFT_H
#define FIELDSHIFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FsDirection {
  // 3T -> 1.5T -> 3T: G then F.
  FS_DIRECTION_FORWARD = 0,
  // 1.5T -> 3T -> 1.5T: F then G.
  FS_DIRECTION_BACKWARD = 1,
} FsDirection;

typedef enum FsDomain {
  // 3T acquisition (the translation source).
  FS_DOMAIN_SOURCE = 0,
  // 1.5T acquisition (the translation target).
  FS_DOMAIN_TARGET = 1,
} FsDomain;

typedef enum FsModelKind {
  FS_MODEL_KIND_CYCLEGAN = 0,
  FS_MODEL_KIND_DCGAN = 1,
} FsModelKind;

// Result code of every `fs_*` call.
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  // A required pointer was null.
  FS_STATUS_NULL_POINTER = 1,
  // An argument was out of range or inconsistent (sizes, enum values).
  FS_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read.
  FS_STATUS_IO = 3,
  // A file was readable but malformed, or a checkpoint failed validation.
  FS_STATUS_FORMAT = 4,
  // The checkpoint holds a different kind of model than the call needs.
  FS_STATUS_WRONG_MODEL_KIND = 5,
  // A Rust panic was caught at the boundary.
  FS_STATUS_INTERNAL = 6,
} FsStatus;

// A loaded checkpoint, ready for inference. Opaque to C.
typedef struct FsModel FsModel;

// Error metrics of one image pair. `psnr_db` is +infinity for identical images.
typedef struct FsMetrics {
  // Sum of absolute pixel differences.
  double mae_sum;
  double mse;
  double psnr_db;
} FsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fs_version(void);

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len` bytes). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t fs_last_error_message(char *buf, size_t len);

// MAE (summed), MSE and PSNR (peak 1.0) between two `height` x `width` images.
//
// # Safety
// `a` and `b` must point to `height * width` doubles; `out` must be writable.
enum FsStatus fs_metrics(const double *a,
                         const double *b,
                         size_t height,
                         size_t width,
                         struct FsMetrics *out);

// Render phantom number `index` of a `size` x `size` set into `out`
// (`size * size` doubles). `domain` is an [`FsDomain`] value. Equal `index`
// and `seed` give the same anatomy in both domains.
//
// # Safety
// `out` must point to `out_len` writable doubles.
enum FsStatus fs_phantom(size_t index,
                         size_t size,
                         uint32_t domain,
                         uint64_t seed,
                         double *out,
                         size_t out_len);

// Load a checkpoint directory. On success `*out` owns a model that must be
// released with [`fs_model_free`].
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
enum FsStatus fs_model_open(const char *path, struct FsModel **out);

// Release a model from [`fs_model_open`]. Null is ignored.
//
// # Safety
// `model` must be null or a pointer returned by `fs_model_open` not yet freed.
void fs_model_free(struct FsModel *model);

// Kind of model held and the image size it was trained at.
//
// # Safety
// `model` must be a live model; `kind` and `image_size` must be writable.
enum FsStatus fs_model_info(const struct FsModel *model,
                            enum FsModelKind *kind,
                            size_t *image_size);

// Translate `count` images of `height` x `width` with a CycleGAN and map them
// back. `direction` is an [`FsDirection`] value. `translated` and
// `reconstructed` receive `count * height * width` floats each.
//
// # Safety
// `model` must be live; `images`, `translated` and `reconstructed` must each
// point to `count * height * width` floats (the outputs writable).
enum FsStatus fs_model_translate(const struct FsModel *model,
                                 uint32_t direction,
                                 const float *images,
                                 size_t count,
                                 size_t height,
                                 size_t width,
                                 float *translated,
                                 float *reconstructed);

// Generate `count` images from latent codes with a DCGAN. `latent` holds
// `count * latent_dim` floats; `out` receives `count * out_len_per_image` floats,
// where the per-image length must equal the generator's output size squared.
//
// # Safety
// `model` must be live; `latent` and `out` must point to the stated lengths.
enum FsStatus fs_model_generate(const struct FsModel *model,
                                const float *latent,
                                size_t count,
                                size_t latent_dim,
                                float *out,
                                size_t out_len_per_image);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIELDSHIFT_H */
