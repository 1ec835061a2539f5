#ifndef SIGMA_LAB_H
#define SIGMA_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SlabStatus {
  SLAB_STATUS_OK = 0,
  // A suite ran but at least one check failed.
  SLAB_STATUS_CHECK_FAILED = 1,
  // Invalid configuration or argument.
  SLAB_STATUS_INVALID_ARGUMENT = 2,
  // Unexpected failure inside the library.
  SLAB_STATUS_INTERNAL = 3,
  // A required pointer was null.
  SLAB_STATUS_NULL_POINTER = 4,
} SlabStatus;

typedef enum SlabComponent {
  SLAB_COMPONENT_X = 0,
  SLAB_COMPONENT_M = 1,
  SLAB_COMPONENT_V = 2,
} SlabComponent;

typedef enum SlabLocalTimeMethod {
  SLAB_LOCAL_TIME_METHOD_OCCUPATION = 0,
  SLAB_LOCAL_TIME_METHOD_DOWNCROSSING = 1,
  SLAB_LOCAL_TIME_METHOD_TANAKA = 2,
} SlabLocalTimeMethod;

// Opaque path with its decomposition `X = M + V`.
typedef struct SlabDecomposed SlabDecomposed;

// Opaque sampled path.
typedef struct SlabPath SlabPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Never null; owned by the
// library and valid until the next failing call on the same thread.
const char *slab_last_error(void);

// Library version as a static NUL-terminated string.
const char *slab_version(void);

// Release a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void slab_string_free(char *s);

// Standard Brownian path on `n_steps` steps of size `dt`.
//
// # Safety
// `out` must be a valid pointer.
enum SlabStatus slab_brownian(double dt,
                              size_t n_steps,
                              uint64_t master_seed,
                              uint64_t stream,
                              struct SlabPath **out);

// Path from `n_steps + 1` caller-provided values.
//
// # Safety
// `values` must point to `len` readable doubles and `out` must be valid.
enum SlabStatus slab_path_new(double dt, const double *values, size_t len, struct SlabPath **out);

// Number of samples (`n_steps + 1`); 0 for null.
//
// # Safety
// `p` must be null or a live handle.
size_t slab_path_len(const struct SlabPath *p);

// Step size; NaN for null.
//
// # Safety
// `p` must be null or a live handle.
double slab_path_dt(const struct SlabPath *p);

// Copy the samples into `buf`, which must hold `slab_path_len(p)` doubles.
//
// # Safety
// `p` must be a live handle and `buf` must point to `len` writable doubles.
enum SlabStatus slab_path_copy(const struct SlabPath *p, double *buf, size_t len);

// # Safety
// `p` must be null or a handle not yet freed.
void slab_path_free(struct SlabPath *p);

// Reflected path `|B| = ∫ sgn(B) dB + L`.
//
// # Safety
// `b` must be a live handle and `out` valid.
enum SlabStatus slab_reflect(const struct SlabPath *b, struct SlabDecomposed **out);

// Copy one component of a decomposed path into a new path handle.
//
// # Safety
// `d` must be a live handle and `out` valid.
enum SlabStatus slab_decomposed_component(const struct SlabDecomposed *d,
                                          enum SlabComponent which,
                                          struct SlabPath **out);

// # Safety
// `d` must be null or a handle not yet freed.
void slab_decomposed_free(struct SlabDecomposed *d);

// Local time at 0 of `x`. `eps` is the band half-width and is ignored by
// the Tanaka estimator.
//
// # Safety
// `x` must be a live handle and `out` valid.
enum SlabStatus slab_local_time(const struct SlabPath *x,
                                enum SlabLocalTimeMethod method,
                                double eps,
                                struct SlabPath **out);

// Increasing part of a decomposed path, read as its local time.
//
// # Safety
// `x` must be a live handle and `out` valid.
enum SlabStatus slab_local_time_decomposed(const struct SlabDecomposed *x, struct SlabPath **out);

// Excursion flip `Z^α X`; writes the new decomposition and, if
// `sup_residual` is non-null, the sup residual of its decomposition identity.
//
// # Safety
// `x` must be a live handle, `out` valid, `sup_residual` null or valid.
enum SlabStatus slab_z_transform(const struct SlabDecomposed *x,
                                 double alpha,
                                 uint64_t master_seed,
                                 uint64_t stream,
                                 struct SlabDecomposed **out,
                                 double *sup_residual);

// Monte Carlo estimate of the exceedance probability at local-time level
// `u` for the boundary `phi_json` (for example `{"kind":"constant","c":1}`).
// Returns `CheckFailed` when the estimate misses the closed form.
//
// # Safety
// `phi_json` must be a NUL-terminated string; output pointers may be null.
enum SlabStatus slab_exceedance_probability(const char *phi_json,
                                            double u,
                                            double dt,
                                            size_t n_paths,
                                            uint64_t master_seed,
                                            double allowance,
                                            double *empirical,
                                            double *closed_form,
                                            double *stderr);

// Run a suite from a JSON configuration (same schema as the CLI config
// file; missing keys take defaults). The report JSON is written to
// `report_json` and must be released with `slab_string_free`.
//
// # Safety
// `config_json` must be a NUL-terminated string and `report_json` valid.
enum SlabStatus slab_run_suite(const char *config_json, char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIGMA_LAB_H */
