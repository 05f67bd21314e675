#ifndef PME_LAB_H
#define PME_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmeStatus {
  PME_STATUS_OK = 0,
  PME_STATUS_NULL_POINTER = 1,
  PME_STATUS_INVALID_ARGUMENT = 2,
  PME_STATUS_REGIME_INVALID = 3,
  PME_STATUS_CONFIG = 4,
  PME_STATUS_RUNTIME = 5,
  PME_STATUS_UTF8 = 6,
  PME_STATUS_PANIC = 7,
} PmeStatus;

typedef enum PmeFunctional {
  PME_FUNCTIONAL_Z2 = 0,
  PME_FUNCTIONAL_M_OVER_U = 1,
} PmeFunctional;

typedef enum PmeCase {
  PME_CASE_THM1_CASE1 = 1,
  PME_CASE_THM1_CASE2 = 2,
  PME_CASE_THM1_CASE3 = 3,
  PME_CASE_THM1_CASE4 = 4,
  PME_CASE_EST1 = 5,
  PME_CASE_THM3 = 6,
  PME_CASE_E671 = 7,
  PME_CASE_THM6 = 8,
} PmeCase;

// A parsed and resolved experiment config.
typedef struct PmeConfig PmeConfig;

// The result of running a config.
typedef struct PmeReport PmeReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pme_version(void);

// Message of the last failed call on this thread, or null. Valid until the next call.
const char *pme_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void pme_string_free(char *s);

// Parse and resolve a JSON config.
//
// # Safety
// `json` must be a NUL-terminated string and `out_config` a valid pointer.
enum PmeStatus pme_config_from_json(const char *json, struct PmeConfig **out_config);

// # Safety
// `config` must be null or a handle from [`pme_config_from_json`].
void pme_config_free(struct PmeConfig *config);

// Number of checks in a config, or 0 for a null handle.
//
// # Safety
// `config` must be null or a live handle.
size_t pme_config_check_count(const struct PmeConfig *config);

// Run every check of `config`.
//
// # Safety
// `config` must be a live handle and `out_report` a valid pointer.
enum PmeStatus pme_run(const struct PmeConfig *config,
                       bool parallel,
                       struct PmeReport **out_report);

// # Safety
// `report` must be null or a handle from [`pme_run`].
void pme_report_free(struct PmeReport *report);

// Process exit code the CLI would return for this report, or -1 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
int32_t pme_report_exit_code(const struct PmeReport *report);

// The report as JSON. `include_timing = false` drops the timing section.
//
// # Safety
// `report` must be a live handle and `out_json` a valid pointer. Free the string with
// [`pme_string_free`].
enum PmeStatus pme_report_json(const struct PmeReport *report,
                               bool include_timing,
                               char **out_json);

// Write `report.json` and the per-check CSV files under `dir`.
//
// # Safety
// `report` must be a live handle and `dir` a NUL-terminated string.
enum PmeStatus pme_report_write(const struct PmeReport *report, const char *dir);

// Both roots of `H(β) = 0` for `0 < m ≤ 1`.
//
// # Safety
// `beta1` and `beta2` must be valid pointers.
enum PmeStatus pme_beta_roots(double m, size_t n, double *beta1, double *beta2);

double pme_z2_drift_super(double m, size_t n, double delta);

// Tilt under which `functional` is a submartingale.
//
// # Safety
// `out_eps` must be a valid pointer.
enum PmeStatus pme_default_epsilon(enum PmeFunctional functional,
                                   double m,
                                   size_t n,
                                   double *out_eps);

bool pme_regime_valid(enum PmeCase case_, double m, size_t n);

// Right-hand side of an estimate at time `t` for input norm `norm`.
//
// # Safety
// `out_bound` must be a valid pointer.
enum PmeStatus pme_bound_value(enum PmeCase case_,
                               double m,
                               size_t n,
                               double norm,
                               double t,
                               double *out_bound);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PME_LAB_H */
