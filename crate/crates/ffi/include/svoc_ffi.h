#ifndef SVOC_FFI_H
#define SVOC_FFI_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvocStatus {
  SVOC_STATUS_OK = 0,
  SVOC_STATUS_NULL_POINTER = 1,
  SVOC_STATUS_INVALID_ARGUMENT = 2,
  SVOC_STATUS_CONFIG = 3,
  SVOC_STATUS_SIMULATION = 4,
  SVOC_STATUS_IO = 5,
  SVOC_STATUS_PANIC = 6,
} SvocStatus;

typedef enum SvocControllerKind {
  SVOC_CONTROLLER_KIND_SVOC = 0,
  SVOC_CONTROLLER_KIND_DVOC_BASELINE = 1,
} SvocControllerKind;

typedef struct SvocController SvocController;

typedef struct SvocRun SvocRun;

typedef struct SvocScenario SvocScenario;

/**
 * One logged sample. Arrays are indexed a, b, c.
 */
typedef struct SvocSample {
  double t;
  double v[3];
  double i[3];
  double p[3];
  double q[3];
  double irms[3];
  double irms_grid[3];
  uint8_t fault[3];
  double amp[3];
} SvocSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error of this thread into `buf` (NUL terminated,
 * truncated to `len - 1` bytes). Returns the full message length, or 0 if
 * there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t svoc_last_error_message(char *buf, size_t len);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SvocStatus svoc_scenario_from_toml(const char *toml, struct SvocScenario **out);

/**
 * Looks up one of the built-in acceptance scenarios by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SvocStatus svoc_scenario_canonical(const char *name, struct SvocScenario **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void svoc_scenario_free(struct SvocScenario *s);

/**
 * Runs a scenario to completion. A run that stops early still yields a
 * handle holding the partial result; the call then returns the error status.
 *
 * # Safety
 * `s` must be a live scenario handle and `out` a valid pointer.
 */
enum SvocStatus svoc_run(const struct SvocScenario *s, struct SvocRun **out);

/**
 * # Safety
 * `r` must be null or a live run handle.
 */
size_t svoc_run_sample_count(const struct SvocRun *r);

/**
 * # Safety
 * `r` must be a live run handle and `out` a valid pointer.
 */
enum SvocStatus svoc_run_sample(const struct SvocRun *r, size_t index, struct SvocSample *out);

/**
 * Highest sliding rms current seen on each phase.
 *
 * # Safety
 * `r` must be a live run handle and `out` must point to 3 doubles.
 */
enum SvocStatus svoc_run_peak_irms(const struct SvocRun *r, double *out);

/**
 * Writes `<name>.csv` and `<name>.events.log` into `dir`.
 *
 * # Safety
 * `r` must be a live run handle and `dir` a NUL-terminated path.
 */
enum SvocStatus svoc_run_write(const struct SvocRun *r, const char *dir);

/**
 * # Safety
 * `r` must be null or a live run handle.
 */
void svoc_run_free(struct SvocRun *r);

/**
 * Creates a controller with default settings and the given rms current
 * limit, synchronized with a nominal grid at phase angle zero.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SvocStatus svoc_controller_new(enum SvocControllerKind kind,
                                    double i_max,
                                    struct SvocController **out);

/**
 * Advances the controller by one sampling period (50 µs by default).
 * `v_pcc`, `i_inv`, `p_star`, `q_star` and `v_cmd` each point to 3 doubles.
 *
 * # Safety
 * All pointers must be valid for 3 doubles and `c` a live handle.
 */
enum SvocStatus svoc_controller_step(struct SvocController *c,
                                     const double *v_pcc,
                                     const double *i_inv,
                                     const double *p_star,
                                     const double *q_star,
                                     double *v_cmd);

/**
 * Fault flags from the latest step, one byte per phase.
 *
 * # Safety
 * `c` must be a live handle and `out` must point to 3 bytes.
 */
enum SvocStatus svoc_controller_faults(const struct SvocController *c, uint8_t *out);

/**
 * # Safety
 * `c` must be null or a live controller handle.
 */
void svoc_controller_free(struct SvocController *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVOC_FFI_H */
