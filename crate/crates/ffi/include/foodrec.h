#ifndef FOODREC_H
#define FOODREC_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FrFood {
  FR_FOOD_FRUIT = 0,
  FR_FOOD_FISH = 1,
  FR_FOOD_MEAT = 2,
  FR_FOOD_PIZZA = 3,
} FrFood;

// Which part of the seeded 80/10/10 split to evaluate on.
typedef enum FrSplit {
  FR_SPLIT_TRAIN = 0,
  FR_SPLIT_VALIDATION = 1,
  FR_SPLIT_TEST = 2,
  FR_SPLIT_ALL = 3,
} FrSplit;

// Result code of every fallible call.
typedef enum FrStatus {
  FR_STATUS_OK = 0,
  // A required pointer argument was null.
  FR_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  FR_STATUS_INVALID_UTF8 = 2,
  // Bad parameter value or malformed argument.
  FR_STATUS_USAGE = 3,
  // Input data could not be read, parsed or validated.
  FR_STATUS_DATA = 4,
  // An internal invariant was violated.
  FR_STATUS_INTERNAL = 5,
  // The output buffer is too small; the required size was written.
  FR_STATUS_BUFFER_TOO_SMALL = 6,
  // The library panicked; the handle arguments should not be reused.
  FR_STATUS_PANIC = 7,
} FrStatus;

// Opaque trained recommendation pipeline.
typedef struct FrPipeline FrPipeline;

// Opaque attribute schema.
typedef struct FrSchema FrSchema;

typedef struct FrMetricReport {
  double accuracy;
  double macro_precision;
  double macro_recall;
  double f_score;
  double beta;
} FrMetricReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failed call on this thread, or null.
// The pointer stays valid until the next library call on this thread.
const char *fr_last_error_message(void);

// Library version as a static string.
const char *fr_version(void);

// Static name of a food ("Fruit", "Fish", "Meat", "Pizza").
const char *fr_food_name(enum FrFood food);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void fr_string_free(char *s);

// The built-in schema: scene, weather, period, dominant_color and,
// if `include_age`, age.
//
// # Safety
// `out` must be a valid pointer to write a handle to.
enum FrStatus fr_schema_default(bool include_age, struct FrSchema **out);

// Loads a schema from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum FrStatus fr_schema_load(const char *path, struct FrSchema **out);

// # Safety
// `schema` must be null or a handle from this library, not yet freed.
void fr_schema_free(struct FrSchema *schema);

// Length of the encoded vector, or 0 for a null handle.
//
// # Safety
// `schema` must be null or a live handle.
size_t fr_schema_encoded_len(const struct FrSchema *schema);

// Encodes a comma-separated tuple into `out_bits` (one byte per bit).
// `*out_len` receives the vector length; if `capacity` is smaller the
// call fails with `BufferTooSmall` and nothing else is written.
//
// # Safety
// `schema` must be a live handle, `tuple` a NUL-terminated string,
// `out_bits` writable for `capacity` bytes (may be null when `capacity`
// is 0), and `out_len` a valid pointer.
enum FrStatus fr_schema_encode(const struct FrSchema *schema,
                               const char *tuple,
                               uint8_t *out_bits,
                               size_t capacity,
                               size_t *out_len);

// Trains a pipeline with oracle providers from a survey CSV.
// `max_depth < 0` means unbounded.
//
// # Safety
// String arguments must be NUL-terminated; `out` a valid pointer.
enum FrStatus fr_pipeline_train(const char *survey_path,
                                const char *schema_path,
                                int32_t max_depth,
                                bool include_age,
                                struct FrPipeline **out);

// Loads a pipeline saved by the CLI or [`fr_pipeline_save`].
//
// # Safety
// `path` must be NUL-terminated; `out` a valid pointer.
enum FrStatus fr_pipeline_load(const char *path, struct FrPipeline **out);

// Writes the pipeline JSON to `path` and its model files beside it.
//
// # Safety
// `pipeline` must be a live handle; `path` NUL-terminated.
enum FrStatus fr_pipeline_save(const struct FrPipeline *pipeline, const char *path);

// # Safety
// `pipeline` must be null or a handle from this library, not yet freed.
void fr_pipeline_free(struct FrPipeline *pipeline);

// Recommends a food. `labels` holds `name=value` pairs separated by
// commas or semicolons for oracle-provided attributes; `image_path` may be
// null when no provider needs pixels.
//
// # Safety
// `pipeline` must be a live handle, `labels` NUL-terminated, `image_path`
// null or NUL-terminated, `out` a valid pointer.
enum FrStatus fr_pipeline_recommend(const struct FrPipeline *pipeline,
                                    const char *labels,
                                    const char *image_path,
                                    enum FrFood *out);

// Scores the recommender on one part of a seeded split of a survey CSV.
//
// # Safety
// `pipeline` must be a live handle, `survey_path` NUL-terminated, `out`
// a valid pointer.
enum FrStatus fr_pipeline_evaluate(const struct FrPipeline *pipeline,
                                   const char *survey_path,
                                   enum FrSplit part,
                                   uint64_t seed,
                                   struct FrMetricReport *out);

// Dominant-color label of a PPM image held in memory. With a null
// `palette_json` the built-in warm/cool palette is used. The label is
// returned in `*out` and must be freed with [`fr_string_free`].
//
// # Safety
// `ppm` must be readable for `len` bytes, `palette_json` null or
// NUL-terminated, `out` a valid pointer.
enum FrStatus fr_dominant_color(const uint8_t *ppm,
                                size_t len,
                                const char *palette_json,
                                size_t k,
                                uint64_t seed,
                                char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOODREC_H */
