#ifndef SEMAND_H
#define SEMAND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SemandStatus {
  SEMAND_STATUS_OK = 0,
  SEMAND_STATUS_NULL_POINTER = 1,
  SEMAND_STATUS_INVALID_ARGUMENT = 2,
  SEMAND_STATUS_DOMAIN = 3,
  SEMAND_STATUS_DATA = 4,
  SEMAND_STATUS_FORMAT = 5,
  SEMAND_STATUS_ALIGNMENT = 6,
  SEMAND_STATUS_CHECKPOINT = 7,
  SEMAND_STATUS_EVALUATION = 8,
  SEMAND_STATUS_IO = 9,
  SEMAND_STATUS_PANIC = 10,
  SEMAND_STATUS_OTHER = 11,
} SemandStatus;

// A trained model loaded from a checkpoint.
typedef struct SemandModel SemandModel;

// A fused, normalized tile.
typedef struct SemandTile SemandTile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next call on the same thread.
const char *semand_last_error(void);

// Tile containing `(lon, lat)` at `zoom`.
//
// # Safety
// `x` and `y` must be valid for writes.
enum SemandStatus semand_lonlat_to_tile(double lon,
                                        double lat,
                                        uint8_t zoom,
                                        uint32_t *x,
                                        uint32_t *y);

// Loads a fused tile from an SMND file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum SemandStatus semand_tile_load(const char *path_,
                                   uint8_t zoom,
                                   uint32_t x,
                                   uint32_t y,
                                   struct SemandTile **out);

// Builds a tile from channel-major float data. `names` holds
// `channel_count` channel names (e.g. "RNP", "RCPP") in canonical order.
//
// # Safety
// `names` must point to `channel_count` NUL-terminated strings, `data` to
// `channel_count * size * size` floats, and `out` must be valid for writes.
enum SemandStatus semand_tile_from_data(uint8_t zoom,
                                        uint32_t x,
                                        uint32_t y,
                                        size_t size,
                                        const char *const *names,
                                        size_t channel_count,
                                        const float *data,
                                        struct SemandTile **out);

// Channel count of a tile, or 0 for NULL.
//
// # Safety
// `tile` must be NULL or a live handle.
size_t semand_tile_channel_count(const struct SemandTile *tile);

// Edge length in pixels, or 0 for NULL.
//
// # Safety
// `tile` must be NULL or a live handle.
size_t semand_tile_size(const struct SemandTile *tile);

// # Safety
// `tile` must be NULL or a handle not yet freed.
void semand_tile_free(struct SemandTile *tile);

// Loads a model checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum SemandStatus semand_model_load(const char *path_, struct SemandModel **out);

// Number of input channels the model expects, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t semand_model_input_channels(const struct SemandModel *model);

// Classifier anomaly score `s¹` in `[0, 1]`. The tile must carry exactly
// the channels the model was trained on.
//
// # Safety
// `model` and `tile` must be live handles; `score` valid for writes.
enum SemandStatus semand_model_score(const struct SemandModel *model,
                                     const struct SemandTile *tile,
                                     double *score);

// GradCAM saliency, row-major `size × size` floats in `[0, 1]`, written
// to `map` (`map_len` must equal `size * size`). `empty` is set to 1 when
// nothing survived rectification and the map is all zero.
//
// # Safety
// `model` and `tile` must be live handles; `map` valid for `map_len`
// writes; `empty` valid for writes.
enum SemandStatus semand_model_localize(const struct SemandModel *model,
                                        const struct SemandTile *tile,
                                        float *map,
                                        size_t map_len,
                                        int32_t *empty);

// # Safety
// `model` must be NULL or a handle not yet freed.
void semand_model_free(struct SemandModel *model);

// Posedness `‖augmented − normal‖_F / ‖normal‖_F` of two square rasters
// of `len` pixels.
//
// # Safety
// `normal` and `augmented` must hold `len` floats; `out` valid for writes.
enum SemandStatus semand_posedness(const float *normal,
                                   const float *augmented,
                                   size_t len,
                                   double *out);

// Exact AUC: probability an anomalous score exceeds a normal one, ties
// counted half.
//
// # Safety
// `normal` must hold `n_normal` doubles, `anomalous` `n_anomalous`; `out`
// valid for writes.
enum SemandStatus semand_auc(const double *normal,
                             size_t n_normal,
                             const double *anomalous,
                             size_t n_anomalous,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMAND_H */
