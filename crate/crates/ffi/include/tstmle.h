#ifndef TSTMLE_H
#define TSTMLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every call. `Ok` is zero.
 */
typedef enum TstmleStatus {
  TSTMLE_STATUS_OK = 0,
  TSTMLE_STATUS_NULL_POINTER = 1,
  TSTMLE_STATUS_CONFIG = 2,
  TSTMLE_STATUS_DATA = 3,
  TSTMLE_STATUS_NUMERICAL = 4,
  TSTMLE_STATUS_UTF8 = 5,
  TSTMLE_STATUS_PANIC = 6,
} TstmleStatus;

/**
 * The result of one estimation call.
 */
typedef struct TstmleReport TstmleReport;

/**
 * A loaded or simulated time series.
 */
typedef struct TstmleSeries TstmleSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *tstmle_version(void);

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call on this thread.
 */
const char *tstmle_last_error_message(void);

/**
 * Loads a CSV series. `schema_json` may be null to infer a single-treatment
 * layout from the header.
 *
 * # Safety
 * String arguments are null or nul-terminated; `out` is valid for writes.
 */
enum TstmleStatus tstmle_series_from_csv(const char *path,
                                         const char *schema_json,
                                         struct TstmleSeries **out);

/**
 * Draws `n` blocks (burn-in included) from a named simulation DGP.
 *
 * # Safety
 * `dgp` is nul-terminated; `out` is valid for writes.
 */
enum TstmleStatus tstmle_series_simulate(const char *dgp,
                                         size_t n,
                                         uint64_t seed,
                                         struct TstmleSeries **out);

/**
 * # Safety
 * `series` is a live handle; `out` is valid for writes.
 */
enum TstmleStatus tstmle_series_len(const struct TstmleSeries *series, size_t *out);

/**
 * # Safety
 * `series` is null or a handle not yet freed.
 */
void tstmle_series_free(struct TstmleSeries *series);

/**
 * Single time-point TMLE. `config_json` uses the keys of the CLI run
 * configuration; `context` is required and `data` is ignored.
 *
 * # Safety
 * `series` is a live handle, `config_json` nul-terminated and `out` valid
 * for writes.
 */
enum TstmleStatus tstmle_estimate_ate(const struct TstmleSeries *series,
                                      const char *config_json,
                                      struct TstmleReport **out);

/**
 * Sequential-regression TMLE; the intervention defaults to always-treat
 * on every node.
 *
 * # Safety
 * As for [`tstmle_estimate_ate`].
 */
enum TstmleStatus tstmle_estimate_ltmle(const struct TstmleSeries *series,
                                        const char *config_json,
                                        struct TstmleReport **out);

/**
 * # Safety
 * `report` is a live handle; `out` is valid for writes.
 */
enum TstmleStatus tstmle_report_psi(const struct TstmleReport *report, double *out);

/**
 * # Safety
 * `report` is a live handle; `out` is valid for writes.
 */
enum TstmleStatus tstmle_report_se(const struct TstmleReport *report, double *out);

/**
 * # Safety
 * `report` is a live handle; `lo` and `hi` are valid for writes.
 */
enum TstmleStatus tstmle_report_ci(const struct TstmleReport *report, double *lo, double *hi);

/**
 * Number of rows the estimate averages over.
 *
 * # Safety
 * `report` is a live handle; `out` is valid for writes.
 */
enum TstmleStatus tstmle_report_n(const struct TstmleReport *report, size_t *out);

/**
 * Copies up to `cap` influence-curve values into `buf`; `len` receives
 * the full length, so a call with `cap = 0` sizes the buffer.
 *
 * # Safety
 * `buf` is valid for `cap` writes (or null when `cap` is zero); `len` is
 * valid for writes.
 */
enum TstmleStatus tstmle_report_eic(const struct TstmleReport *report,
                                    double *buf,
                                    size_t cap,
                                    size_t *len);

/**
 * Report as JSON; release the string with [`tstmle_string_free`].
 *
 * # Safety
 * `report` is a live handle; `out` is valid for writes.
 */
enum TstmleStatus tstmle_report_json(const struct TstmleReport *report, char **out);

/**
 * # Safety
 * `report` is null or a handle not yet freed.
 */
void tstmle_report_free(struct TstmleReport *report);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void tstmle_string_free(char *s);

/**
 * Smoothed assignment probability for blip value `x`.
 *
 * # Safety
 * `out` is valid for writes.
 */
enum TstmleStatus tstmle_gn_smooth(double x, double t_n, double e_n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSTMLE_H */
