#ifndef ULSENSE_H
#define ULSENSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum UlsStatus {
  ULS_STATUS_OK = 0,
  ULS_STATUS_NULL_POINTER = 1,
  ULS_STATUS_INVALID_ARGUMENT = 2,
  ULS_STATUS_CONFIG = 3,
  ULS_STATUS_NUMERIC = 4,
  ULS_STATUS_IO = 5,
  ULS_STATUS_FORMAT = 6,
  ULS_STATUS_UNKNOWN_PRESET = 7,
  ULS_STATUS_OUT_OF_RANGE = 8,
  ULS_STATUS_PANIC = 99,
} UlsStatus;

/**
 * Experiment specification handle.
 */
typedef struct UlsSpec UlsSpec;

/**
 * One synthesized and processed trial.
 */
typedef struct UlsTrial UlsTrial;

/**
 * Per-method metrics of a trial. `clustering_accuracy` is negative when the
 * method does not cluster.
 */
typedef struct UlsMetrics {
  double nmse_delay;
  double nmse_doppler;
  double rmse_aoa_deg;
  double clustering_accuracy;
  double miss_rate;
  double false_alarm_rate;
  uint32_t vi_iterations;
  bool converged;
} UlsMetrics;

/**
 * One estimated path. `has_doppler` / `has_aoa` are false when the estimate
 * was withheld; the value is then 0.
 */
typedef struct UlsPath {
  double delay_s;
  double doppler_hz;
  double aoa_rad;
  double gain_power;
  bool has_doppler;
  bool has_aoa;
} UlsPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *uls_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *uls_last_error(void);

/**
 * Create a spec from a preset name (`fig2`, `fig3`, `fig4`, `table1`,
 * `smoke`).
 */
enum UlsStatus uls_spec_preset(const char *name, struct UlsSpec **out);

/**
 * Merge a TOML override into the spec.
 */
enum UlsStatus uls_spec_apply_toml(struct UlsSpec *spec, const char *toml);

enum UlsStatus uls_spec_set_trials(struct UlsSpec *spec, uint32_t trials);

enum UlsStatus uls_spec_set_seed(struct UlsSpec *spec, uint64_t seed);

/**
 * Number of `(composition, sweep value)` points.
 */
enum UlsStatus uls_spec_num_points(const struct UlsSpec *spec, size_t *out);

void uls_spec_free(struct UlsSpec *spec);

/**
 * Run the full sweep and write the result CSV. `failed_trials` may be null.
 */
enum UlsStatus uls_run_sweep(const struct UlsSpec *spec,
                             const char *out_csv,
                             size_t *failed_trials);

/**
 * Synthesize and process trial `trial` at sweep point `point`.
 */
enum UlsStatus uls_trial_run(const struct UlsSpec *spec,
                             size_t point,
                             uint64_t trial,
                             struct UlsTrial **out);

enum UlsStatus uls_trial_num_methods(const struct UlsTrial *trial, size_t *out);

/**
 * Writes a NUL-terminated method name into `buf` (at most `len` bytes).
 */
enum UlsStatus uls_trial_method_name(const struct UlsTrial *trial, size_t m, char *buf, size_t len);

enum UlsStatus uls_trial_metrics(const struct UlsTrial *trial, size_t m, struct UlsMetrics *out);

/**
 * Number of UEs in the trial.
 */
enum UlsStatus uls_trial_num_ues(const struct UlsTrial *trial, size_t *out);

/**
 * Number of estimated paths of UE `ue` under method `m`.
 */
enum UlsStatus uls_trial_num_paths(const struct UlsTrial *trial, size_t m, size_t ue, size_t *out);

enum UlsStatus uls_trial_path(const struct UlsTrial *trial,
                              size_t m,
                              size_t ue,
                              size_t path,
                              struct UlsPath *out);

/**
 * True cluster labels of the trial's UEs, written to `out[0..len]`.
 */
enum UlsStatus uls_trial_true_labels(const struct UlsTrial *trial, uint32_t *out, size_t len);

void uls_trial_free(struct UlsTrial *trial);

/**
 * Permutation-matched clustering accuracy of two label arrays of length `n`.
 */
enum UlsStatus uls_clustering_accuracy(const uint32_t *truth,
                                       const uint32_t *predicted,
                                       size_t n,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ULSENSE_H */
