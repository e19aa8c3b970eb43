#ifndef SPLITFED_UPLIFT_H
#define SPLITFED_UPLIFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfuStatus {
  SFU_STATUS_OK = 0,
  SFU_STATUS_NULL_POINTER = 1,
  SFU_STATUS_INVALID_UTF8 = 2,
  SFU_STATUS_CONFIG = 3,
  SFU_STATUS_VALIDATION = 4,
  SFU_STATUS_DATA = 5,
  SFU_STATUS_DIMENSION = 6,
  SFU_STATUS_INFEASIBLE = 7,
  SFU_STATUS_IO = 8,
  SFU_STATUS_PANIC = 9,
  SFU_STATUS_INTERNAL = 10,
} SfuStatus;

// Parsed and validated experiment configuration.
typedef struct SfuExperiment SfuExperiment;

// A trained model loaded from a run's `models/` directory.
typedef struct SfuModel SfuModel;

// Results of a completed experiment run.
typedef struct SfuRun SfuRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// successful call. Valid until the next call into the library.
const char *sfu_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sfu_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void sfu_string_free(char *s);

// Parses and validates a TOML experiment document.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum SfuStatus sfu_experiment_from_toml(const char *toml, struct SfuExperiment **out);

// # Safety
// `exp` must be null or a handle from [`sfu_experiment_from_toml`].
void sfu_experiment_free(struct SfuExperiment *exp);

// Runs every (method, seed) cell. Cell failures do not fail the call;
// see [`sfu_run_cell_counts`].
//
// # Safety
// `exp` must be a live experiment handle; `out` must be writable.
enum SfuStatus sfu_experiment_run(const struct SfuExperiment *exp, struct SfuRun **out);

// # Safety
// `run` must be null or a handle from [`sfu_experiment_run`].
void sfu_run_free(struct SfuRun *run);

// Total and failed cell counts.
//
// # Safety
// `run` must be a live run handle; outputs must be writable.
enum SfuStatus sfu_run_cell_counts(const struct SfuRun *run, size_t *total, size_t *failed);

// The main results table as a CSV string; free with [`sfu_string_free`].
//
// # Safety
// `run` must be a live run handle; `out` must be writable.
enum SfuStatus sfu_run_report_csv(const struct SfuRun *run, char **out);

// Writes every artifact of the run under `dir`.
//
// # Safety
// `run` must be a live run handle; `dir` a NUL-terminated path.
enum SfuStatus sfu_run_write(const struct SfuRun *run, const char *dir);

// Rank-based AUROC of `scores` against binary `labels`.
//
// # Safety
// `scores` and `labels` must point to `n` elements; `out` must be writable.
enum SfuStatus sfu_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

// AUUC and end-of-curve uplift on the default 100-point grid.
//
// # Safety
// `tau`, `t` and `y` must point to `n` elements; outputs must be writable.
enum SfuStatus sfu_uplift_auuc(const double *tau,
                               const uint8_t *t,
                               const uint8_t *y,
                               size_t n,
                               double *auuc,
                               double *end_uplift);

// Data-size weighted mean of `k` parameter vectors of length `len`,
// stored row-major in `params`.
//
// # Safety
// `params` must hold `k * len` values, `sizes` `k` values and `out` room
// for `len` values.
enum SfuStatus sfu_fedavg_aggregate(const double *params,
                                    const size_t *sizes,
                                    size_t k,
                                    size_t len,
                                    double *out);

// Loads a saved model JSON file.
//
// # Safety
// `path` must be a NUL-terminated path; `out` must be writable.
enum SfuStatus sfu_model_load(const char *path, struct SfuModel **out);

// # Safety
// `model` must be null or a handle from [`sfu_model_load`].
void sfu_model_free(struct SfuModel *model);

// Number of input features and number of clients of a saved model.
//
// # Safety
// `model` must be a live model handle; outputs must be writable.
enum SfuStatus sfu_model_shape(const struct SfuModel *model, size_t *input_dim, size_t *clients);

// Treated and control outcome probabilities for `rows` preprocessed
// feature rows. `client < 0` uses the shared model; otherwise that
// client's adapter is applied when it has one.
//
// # Safety
// `x` must hold `rows * cols` values; `mu1` and `mu0` room for `rows`.
enum SfuStatus sfu_model_predict(const struct SfuModel *model,
                                 int64_t client,
                                 const double *x,
                                 size_t rows,
                                 size_t cols,
                                 double *mu1,
                                 double *mu0);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLITFED_UPLIFT_H */
