#ifndef MCLAB_H
#define MCLAB_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum MclabStatus {
  MCLAB_STATUS_OK = 0,
  MCLAB_STATUS_NULL_POINTER = 1,
  MCLAB_STATUS_INVALID_ARGUMENT = 2,
  MCLAB_STATUS_ESP_VIOLATION = 3,
  MCLAB_STATUS_NOT_RESCALABLE = 4,
  MCLAB_STATUS_ILL_CONDITIONED = 5,
  MCLAB_STATUS_NOT_DIAGONALIZABLE = 6,
  MCLAB_STATUS_CONFIG = 7,
  MCLAB_STATUS_IO = 8,
  // A computation failed for every requested method.
  MCLAB_STATUS_FAILED = 9,
  MCLAB_STATUS_PANIC = 10,
} MclabStatus;

// A memory curve `MC_0 … MC_{len-1}`.
typedef struct MclabCurve MclabCurve;

// A linear reservoir `x_t = A x_{t-1} + C z_t`.
typedef struct MclabSystem MclabSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or an empty string.
// The pointer stays valid until the next `mclab_*` call on the same thread.
const char *mclab_last_error(void);

// Generates a reservoir. `kind` is one of `gaussian`, `uniform`,
// `sparse_gaussian`, `orthogonal_gaussian`, `cyclic`, `delay_shift`,
// `conditioned_sparse_gaussian`. A NaN `rho` keeps the raw normalization.
//
// # Safety
// `kind` must be a NUL-terminated string and `out` a writable pointer.
enum MclabStatus mclab_system_generate(const char *kind,
                                       size_t n,
                                       double rho,
                                       uint64_t seed,
                                       struct MclabSystem **out);

// Builds a system from a row-major `n × n` matrix and a length-`n` mask.
//
// # Safety
// `a` must point to `n * n` doubles, `c` to `n` doubles.
enum MclabStatus mclab_system_from_parts(size_t n,
                                         const double *a,
                                         const double *c,
                                         struct MclabSystem **out);

// # Safety
// `sys` must come from this library and not be used afterwards.
void mclab_system_free(struct MclabSystem *sys);

// State dimension, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t mclab_system_dim(const struct MclabSystem *sys);

// Spectral radius of `A`, or NaN for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
double mclab_system_spectral_radius(const struct MclabSystem *sys);

// Serializes the system to JSON. Release the string with [`mclab_string_free`].
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum MclabStatus mclab_system_to_json(const struct MclabSystem *sys, char **out);

// # Safety
// `s` must come from this library and not be used afterwards.
void mclab_string_free(char *s);

// Memory curve of `sys` for lags `0 … tau_max-1` by one method: `naive`,
// `eigen_neutral`, `osm`, `osm_plus`, `montecarlo`, `stationary` or
// `oracle`. `m = 0` selects the automatic Krylov size; `l` is the OSM+ mask
// count and `t` the Monte Carlo sample length.
//
// # Safety
// `sys` must be a live handle, `method` a NUL-terminated string and `out`
// writable.
enum MclabStatus mclab_capacity(const struct MclabSystem *sys,
                                const char *method,
                                size_t tau_max,
                                size_t m,
                                size_t l,
                                size_t t,
                                uint64_t seed,
                                struct MclabCurve **out);

// # Safety
// `curve` must be null or a live handle.
size_t mclab_curve_len(const struct MclabCurve *curve);

// # Safety
// `curve` must be null or a live handle.
double mclab_curve_total(const struct MclabCurve *curve);

// Copies up to `len` values into `buf`; returns the number copied.
//
// # Safety
// `buf` must have room for `len` doubles.
size_t mclab_curve_values(const struct MclabCurve *curve, double *buf, size_t len);

// # Safety
// `curve` must come from this library and not be used afterwards.
void mclab_curve_free(struct MclabCurve *curve);

// Runs an experiment from a JSON config string, writing into `out_dir`
// (null keeps the config's own `out_dir`).
//
// # Safety
// `config_json` must be a NUL-terminated string; `out_dir` null or one.
enum MclabStatus mclab_run_config_json(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCLAB_H */
