#ifndef DDAM_H
#define DDAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum DdamStatus {
  DDAM_STATUS_OK = 0,
  DDAM_STATUS_NULL_POINTER = 1,
  DDAM_STATUS_INVALID_ARGUMENT = 2,
  DDAM_STATUS_NUMERICAL = 3,
  DDAM_STATUS_INFEASIBLE = 4,
  DDAM_STATUS_UNKNOWN_EXPERIMENT = 5,
  DDAM_STATUS_IO = 6,
  DDAM_STATUS_OUT_OF_RANGE = 7,
  DDAM_STATUS_PANIC = 8,
} DdamStatus;

/**
 * Zero-forcing feasibility verdict.
 */
typedef enum DdamVerdict {
  DDAM_VERDICT_INFEASIBLE = 0,
  DDAM_VERDICT_FEASIBLE = 1,
  DDAM_VERDICT_UNDETERMINED = 2,
} DdamVerdict;

/**
 * Opaque system configuration.
 */
typedef struct DdamConfig DdamConfig;

/**
 * Opaque experiment result table.
 */
typedef struct DdamTable DdamTable;

/**
 * One summary row of a result table. String fields are reachable through
 * `ddam_table_row_labels`.
 */
typedef struct DdamRow {
  double param_value;
  uint64_t seed;
  size_t trials;
  double mean;
  double median;
  double p10;
  double p90;
} DdamRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *ddam_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *ddam_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ddam_string_free(char *s);

/**
 * New configuration with the default simulation parameters.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdamStatus ddam_config_new(struct DdamConfig **out);

/**
 * Configuration read from a TOML file; missing keys take defaults.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum DdamStatus ddam_config_from_toml(const char *path, struct DdamConfig **out);

/**
 * # Safety
 * `cfg` must come from `ddam_config_new`/`ddam_config_from_toml` and not
 * have been freed. Null is ignored.
 */
void ddam_config_free(struct DdamConfig *cfg);

/**
 * Sets the antenna, stream and path counts, then validates the result.
 * The handle is unchanged when validation fails.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum DdamStatus ddam_config_set_dimensions(struct DdamConfig *cfg,
                                           size_t m_t,
                                           size_t m_r,
                                           size_t n_s,
                                           size_t l);

/**
 * Sets the transmit power (W) and the speed (m/s), then validates.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum DdamStatus ddam_config_set_link(struct DdamConfig *cfg,
                                     double tx_power_watts,
                                     double velocity_mps);

/**
 * Configuration as JSON; free with `ddam_string_free`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for writes.
 */
enum DdamStatus ddam_config_to_json(const struct DdamConfig *cfg, char **out);

/**
 * Zero-forcing feasibility verdict for the given dimensions.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdamStatus ddam_feasibility(size_t m_t,
                                 size_t m_r,
                                 size_t n_s,
                                 size_t l,
                                 enum DdamVerdict *out);

/**
 * Guard-interval overhead of DDAM (one guard per path-invariant block) and
 * the cyclic-prefix overhead of OFDM with `num_subcarriers`, as fractions.
 *
 * # Safety
 * `cfg` must be a live handle; both outputs must be valid for writes.
 */
enum DdamStatus ddam_guard_overheads(const struct DdamConfig *cfg,
                                     size_t num_subcarriers,
                                     double *ddam_out,
                                     double *ofdm_out);

/**
 * Path-based ZF spectral efficiency (bit/s/Hz) of one seeded channel draw.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for writes.
 */
enum DdamStatus ddam_zf_rate(const struct DdamConfig *cfg,
                             uint64_t seed,
                             uint64_t trial,
                             double *out);

/**
 * Square or 128-point QAM bit error rate on AWGN at a linear SNR.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdamStatus ddam_qam_ber(double snr_linear, size_t order, double *out);

/**
 * Runs a registered experiment. `cfg` may be null for defaults.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `cfg` null or a live handle,
 * `out` valid for writes.
 */
enum DdamStatus ddam_run_experiment(const char *name,
                                    uint64_t seed,
                                    size_t trials,
                                    const struct DdamConfig *cfg,
                                    struct DdamTable **out);

/**
 * # Safety
 * `table` must come from `ddam_run_experiment` and not have been freed.
 * Null is ignored.
 */
void ddam_table_free(struct DdamTable *table);

/**
 * # Safety
 * `table` must be a live handle; `out` must be valid for writes.
 */
enum DdamStatus ddam_table_num_rows(const struct DdamTable *table, size_t *out);

/**
 * # Safety
 * `table` must be a live handle; `out` must be valid for writes.
 */
enum DdamStatus ddam_table_row(const struct DdamTable *table, size_t index, struct DdamRow *out);

/**
 * Scheme, parameter name and metric of a row; each string is freed with
 * `ddam_string_free`. Any output pointer may be null to skip it.
 *
 * # Safety
 * `table` must be a live handle; non-null outputs must be valid for writes.
 */
enum DdamStatus ddam_table_row_labels(const struct DdamTable *table,
                                      size_t index,
                                      char **scheme,
                                      char **param_name,
                                      char **metric);

/**
 * Whole table as CSV; free with `ddam_string_free`.
 *
 * # Safety
 * `table` must be a live handle; `out` must be valid for writes.
 */
enum DdamStatus ddam_table_to_csv(const struct DdamTable *table, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDAM_H */
