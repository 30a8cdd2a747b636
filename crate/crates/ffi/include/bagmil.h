#ifndef BAGMIL_H
#define BAGMIL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MilStatus {
  MIL_STATUS_OK = 0,
  MIL_STATUS_NULL_POINTER = 1,
  MIL_STATUS_INVALID_ARGUMENT = 2,
  MIL_STATUS_DATA_ERROR = 3,
  MIL_STATUS_FORMAT_ERROR = 4,
  MIL_STATUS_CONFIG_ERROR = 5,
  MIL_STATUS_SHAPE_ERROR = 6,
  MIL_STATUS_NUMERIC_ERROR = 7,
  MIL_STATUS_IO_ERROR = 8,
  MIL_STATUS_PANIC = 9,
} MilStatus;

// A bag dataset read from JSONL.
typedef struct MilDataset MilDataset;

// A trained estimator together with the scaler fitted on its training bags.
typedef struct MilModel MilModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *mil_last_error_message(void);

// Reads a JSONL bag file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum MilStatus mil_dataset_read_jsonl(const char *path, struct MilDataset **out);

// # Safety
// `ds` must come from this library and not be used afterwards. Null is ignored.
void mil_dataset_free(struct MilDataset *ds);

// Number of bags; 0 for null.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t mil_dataset_len(const struct MilDataset *ds);

// Instance feature dimension; 0 for null or an empty dataset.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t mil_dataset_dim(const struct MilDataset *ds);

// Number of instances in bag `bag`.
//
// # Safety
// `ds` must be a live dataset handle and `out` a valid pointer.
enum MilStatus mil_dataset_bag_len(const struct MilDataset *ds, size_t bag, size_t *out);

// Copies the bag labels into `out`, which must hold one double per bag.
//
// # Safety
// `ds` must be a live dataset handle; `out` must point to `out_len` doubles.
enum MilStatus mil_dataset_labels(const struct MilDataset *ds, double *out, size_t out_len);

// Loads a model file written by the toolkit.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum MilStatus mil_model_load(const char *path, struct MilModel **out);

// Fits a scaler on `ds`, then trains the estimator described by the JSON
// config (`{"kind": "neural", "task": ...}` and friends).
//
// # Safety
// `ds` must be a live dataset handle, `config_json` a nul-terminated string
// and `out` a valid pointer.
enum MilStatus mil_model_fit(const struct MilDataset *ds,
                             const char *config_json,
                             struct MilModel **out);

// # Safety
// `model` must come from this library and not be used afterwards. Null is ignored.
void mil_model_free(struct MilModel *model);

// Bag predictions (probabilities for classification) for every bag of `ds`.
//
// # Safety
// Handles must be live; `out` must point to `out_len` doubles.
enum MilStatus mil_model_predict(const struct MilModel *model,
                                 const struct MilDataset *ds,
                                 double *out,
                                 size_t out_len);

// Prediction for one bag given as a row-major `n_instances x dim` buffer of
// raw (unscaled) features.
//
// # Safety
// `model` must be live, `data` must point to `n_instances * dim` doubles and
// `out` to one double.
enum MilStatus mil_model_predict_bag(const struct MilModel *model,
                                     const double *data,
                                     size_t n_instances,
                                     size_t dim,
                                     double *out);

// Instance weights of bag `bag` of `ds`; `out_len` must equal its size.
//
// # Safety
// Handles must be live; `out` must point to `out_len` doubles.
enum MilStatus mil_model_instance_weights(const struct MilModel *model,
                                          const struct MilDataset *ds,
                                          size_t bag,
                                          double *out,
                                          size_t out_len);

// Writes the model, scaler included, to `path`.
//
// # Safety
// `model` must be live and `path` a nul-terminated string.
enum MilStatus mil_model_save(const struct MilModel *model, const char *path);

// Model file JSON as a newly allocated string; release it with
// [`mil_string_free`].
//
// # Safety
// `model` must be live and `out` a valid pointer.
enum MilStatus mil_model_to_json(const struct MilModel *model, char **out);

// # Safety
// `s` must come from this library and not be used afterwards. Null is ignored.
void mil_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAGMIL_H */
