#ifndef PMRTM_H
#define PMRTM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmStage {
  PM_STAGE_FDSIM = 0,
  PM_STAGE_DECOMPOSE = 1,
  PM_STAGE_RTC = 2,
  PM_STAGE_MIGRATE = 3,
  PM_STAGE_GATHER = 4,
} PmStage;

// Result of every call; values match the command-line exit codes.
typedef enum PmStatus {
  PM_STATUS_OK = 0,
  // A required pointer argument was null or a string was not UTF-8.
  PM_STATUS_INVALID_ARGUMENT = 1,
  PM_STATUS_CONFIG = 2,
  PM_STATUS_NUMERICAL = 3,
  PM_STATUS_IO = 4,
  PM_STATUS_PANIC = 5,
} PmStatus;

// Parsed run configuration.
typedef struct PmConfig PmConfig;

// Sampled multi-channel field read from a PMGRID/PMDATA file.
typedef struct PmGrid PmGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t pm_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *pm_version(void);

// Load a run configuration from a file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum PmStatus pm_config_load(const char *path, struct PmConfig **out);

// Parse a run configuration from text.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid for writes.
enum PmStatus pm_config_parse(const char *text, struct PmConfig **out);

// Override the output directory of a configuration.
//
// # Safety
// `cfg` must come from `pm_config_load`/`pm_config_parse`; `dir` must be a
// NUL-terminated string.
enum PmStatus pm_config_set_output(struct PmConfig *cfg, const char *dir);

// # Safety
// `cfg` must be null or a handle not yet freed.
void pm_config_free(struct PmConfig *cfg);

// Run one pipeline stage; artifacts go to the configured output directory.
//
// # Safety
// `cfg` must be a live configuration handle.
enum PmStatus pm_run_stage(const struct PmConfig *cfg, enum PmStage stage);

// Run the invariant suite; `*passed` receives 1 when every check passes.
//
// # Safety
// `passed` must be valid for writes.
enum PmStatus pm_selftest(uint64_t seed, int *passed);

// Read a PMGRID or PMDATA file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum PmStatus pm_grid_read(const char *path, struct PmGrid **out);

// Sample counts along both axes and number of channels.
//
// # Safety
// `grid` must be a live handle; output pointers must be valid for writes.
enum PmStatus pm_grid_shape(const struct PmGrid *grid, size_t *n0, size_t *n1, size_t *channels);

// Spacing and origin, two values each.
//
// # Safety
// `grid` must be a live handle; `spacing` and `origin` valid for 2 writes.
enum PmStatus pm_grid_geometry(const struct PmGrid *grid, double *spacing, double *origin);

// Pointer to the samples of one channel, axis 0 fastest. The pointer stays
// valid until the handle is freed.
//
// # Safety
// `grid` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_grid_channel(const struct PmGrid *grid, size_t channel, const double **out);

// # Safety
// `grid` must be null or a handle not yet freed.
void pm_grid_free(struct PmGrid *grid);

// Type-2 nonuniform FFT: `out[p] = sum_m spec[m] exp(i <x_p, signed_bin(m)>)`
// for an `n0 x n1` FFT-ordered spectrum (axis 0 fastest, interleaved
// re/im) at `count` points given as interleaved `(x0, x1)` radians.
//
// # Safety
// `spec` must hold `2 n0 n1` doubles, `points` `2 count`, `out` `2 count`.
enum PmStatus pm_nufft_type2(const double *spec,
                             size_t n0,
                             size_t n1,
                             const double *points,
                             size_t count,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMRTM_H */
