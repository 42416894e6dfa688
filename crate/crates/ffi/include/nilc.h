#ifndef NILC_H
#define NILC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum NilcStatus {
  NILC_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an impossible size.
   */
  NILC_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration rejected.
   */
  NILC_STATUS_CONFIG = 2,
  /**
   * Input data violates an invariant.
   */
  NILC_STATUS_INVALID_INPUT = 3,
  NILC_STATUS_IO = 4,
  /**
   * Malformed file or model response.
   */
  NILC_STATUS_PARSE = 5,
  /**
   * Model or embedding endpoint failed.
   */
  NILC_STATUS_TRANSPORT = 6,
  /**
   * Rust panic caught at the boundary.
   */
  NILC_STATUS_INTERNAL = 7,
} NilcStatus;

/**
 * Validated pipeline configuration.
 */
typedef struct NilcConfig NilcConfig;

/**
 * Result of a finished run.
 */
typedef struct NilcRun NilcRun;

/**
 * External clustering metrics.
 */
typedef struct NilcMetrics {
  double nmi;
  double ari;
  double acc;
  double ana;
} NilcMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next nilc call on the same thread.
 */
const char *nilc_last_error(void);

/**
 * Library version as a static string.
 */
const char *nilc_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void nilc_string_free(char *s);

/**
 * Parses and validates a JSON or `key = value` configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum NilcStatus nilc_config_parse(const char *text, struct NilcConfig **out);

/**
 * The validated configuration with defaults filled in, as JSON.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum NilcStatus nilc_config_to_json(const struct NilcConfig *config, char **out);

/**
 * # Safety
 * `config` must be NULL or a handle from [`nilc_config_parse`] not yet freed.
 */
void nilc_config_free(struct NilcConfig *config);

/**
 * Clusters a JSONL dataset file. `labeled_path` may be NULL; when given it
 * supplies the known intents for semi-supervised mode.
 *
 * # Safety
 * `config` must be a live handle, paths NUL-terminated strings (or NULL for
 * `labeled_path`), `out` writable.
 */
enum NilcStatus nilc_run_dataset(const struct NilcConfig *config,
                                 const char *dataset_path,
                                 const char *labeled_path,
                                 struct NilcRun **out);

/**
 * Clusters `n` row-major `dim`-vectors with their texts. New text (summaries,
 * rewrites) is embedded by the encoder the configuration names.
 *
 * # Safety
 * `data` must hold `n * dim` doubles, `texts` `n` NUL-terminated strings.
 */
enum NilcStatus nilc_run_matrix(const struct NilcConfig *config,
                                const double *data,
                                size_t n,
                                size_t dim,
                                const char *const *texts,
                                struct NilcRun **out);

/**
 * Number of clustered samples.
 *
 * # Safety
 * `run` must be a live handle.
 */
size_t nilc_run_len(const struct NilcRun *run);

/**
 * Copies the cluster of every sample into `out`, which holds `len` entries.
 *
 * # Safety
 * `run` must be a live handle and `out` writable for `len` entries.
 */
enum NilcStatus nilc_run_assignments(const struct NilcRun *run, size_t *out, size_t len);

/**
 * Run report as JSON; free with [`nilc_string_free`].
 *
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum NilcStatus nilc_run_report_json(const struct NilcRun *run, char **out);

/**
 * Writes `assignments.jsonl`, `summaries.json` and `report.json` into `dir`.
 *
 * # Safety
 * `run` must be a live handle; `dir` a NUL-terminated string.
 */
enum NilcStatus nilc_run_write(const struct NilcRun *run, const char *dir);

/**
 * # Safety
 * `run` must be NULL or a handle not yet freed.
 */
void nilc_run_free(struct NilcRun *run);

/**
 * Scores predicted clusters against integer ground-truth labels.
 *
 * # Safety
 * `pred` and `truth` must hold `n` entries; `out` must be writable.
 */
enum NilcStatus nilc_evaluate(const size_t *pred,
                              const size_t *truth,
                              size_t n,
                              struct NilcMetrics *out);

/**
 * Minimum-cost assignment of rows to distinct columns of a row-major
 * `rows x cols` matrix. `row_to_col` receives `rows` entries; rows left
 * unmatched (more rows than columns) get -1.
 *
 * # Safety
 * `costs` must hold `rows * cols` doubles, `row_to_col` `rows` entries, and
 * `total` must be writable.
 */
enum NilcStatus nilc_hungarian(const double *costs,
                               size_t rows,
                               size_t cols,
                               ptrdiff_t *row_to_col,
                               double *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NILC_H */
