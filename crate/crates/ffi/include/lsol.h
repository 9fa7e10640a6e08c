#ifndef LSOL_H
#define LSOL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum {
  LSOL_OK = 0,
  // A required pointer argument was null.
  LSOL_ERR_NULL = 1,
  LSOL_ERR_INVALID_ARGUMENT = 2,
  LSOL_ERR_DOMAIN = 3,
  // Newton or eigensolver failure, non-finite values, escaped soliton.
  LSOL_ERR_NUMERICAL = 4,
  LSOL_ERR_FORMAT = 5,
  LSOL_ERR_IO = 6,
  LSOL_ERR_NOT_REALIZABLE = 7,
  // Output buffer too small; `*len` holds the required length.
  LSOL_ERR_BUFFER = 8,
  // A Rust panic was caught at the boundary.
  LSOL_ERR_PANIC = 9,
} LsolStatus;

// Soliton geometry selector.
typedef enum {
  LSOL_GEOMETRY_LINE = 0,
  LSOL_GEOMETRY_RADIAL = 1,
} LsolGeometry;

// Complex field on a periodic grid, in reduced units.
typedef struct LsolField LsolField;

// Reduced model parameters.
typedef struct LsolParams LsolParams;

// Converged free soliton.
typedef struct LsolSoliton LsolSoliton;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lsol_version(void);

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *lsol_last_error(void);

// Creates a parameter set for the reduced field equation.
//
// # Safety
// `out` must be valid for a pointer write.
LsolStatus lsol_params_new(double g0,
                           double a0,
                           double b,
                           double theta,
                           double e_in,
                           LsolParams **out);

// # Safety
// `p` must come from [`lsol_params_new`] and not be used afterwards.
void lsol_params_free(LsolParams *p);

// Sets the pump statistics of the active and passive media, each in [0, 1].
//
// # Safety
// `p` must be a live handle.
LsolStatus lsol_params_set_pump_statistics(LsolParams *p, double s_a, double s_p);

// Saturable gain f(I).
//
// # Safety
// `p` must be a live handle and `out` valid for a write.
LsolStatus lsol_gain(const LsolParams *p, double intensity, double *out);

// Intensities of all homogeneous states at holding intensity `i_in`,
// ascending. Stability flags (1 stable, 0 unstable) go to `stable` when it
// is non-null; it must then have the same capacity.
//
// # Safety
// Buffers must hold `cap` elements; `len` must be valid for a write.
LsolStatus lsol_homogeneous_states(const LsolParams *p,
                                   double i_in,
                                   double *intensity,
                                   int *stable,
                                   size_t cap,
                                   size_t *len);

// Solves for the free soliton of `p` (which must have E_in = 0) on a line
// of `n` points and length `length`. Radial profiles are stored as A(|x|).
//
// # Safety
// `p` must be a live handle and `out` valid for a pointer write.
LsolStatus lsol_soliton_find(const LsolParams *p,
                             LsolGeometry geometry,
                             size_t n,
                             double length,
                             LsolSoliton **out);

// # Safety
// `s` must come from [`lsol_soliton_find`] and not be used afterwards.
void lsol_soliton_free(LsolSoliton *s);

// Frequency shift ν_s, peak intensity and final Newton residual. Any of
// the output pointers may be null.
//
// # Safety
// `s` must be a live handle.
LsolStatus lsol_soliton_info(const LsolSoliton *s,
                             double *nu_s,
                             double *peak_intensity,
                             double *residual);

// Profile samples on the solver grid as separate real and imaginary parts.
//
// # Safety
// `re` and `im` must hold `cap` elements; `len` must be valid for a write.
LsolStatus lsol_soliton_profile(const LsolSoliton *s,
                                double *re,
                                double *im,
                                size_t cap,
                                size_t *len);

// Linear stability: `*stable` is 1 when the largest growth rate outside
// the symmetry modes is below tolerance.
//
// # Safety
// `s` must be a live handle; outputs must be valid for writes.
LsolStatus lsol_soliton_stability(const LsolSoliton *s, int *stable, double *max_growth);

// Field on a 1D (`dim` = 1, `ny` ignored) or 2D grid from split real and
// imaginary arrays of length nx·ny, row-major.
//
// # Safety
// `re` and `im` must hold nx·ny elements (nx for a line).
LsolStatus lsol_field_new(int dim,
                          size_t nx,
                          size_t ny,
                          double length,
                          const double *re,
                          const double *im,
                          LsolField **out);

// Embeds a soliton on a fresh line (`dim` = 1) or square (`dim` = 2) grid.
//
// # Safety
// `s` must be a live handle and `out` valid for a pointer write.
LsolStatus lsol_field_from_soliton(const LsolSoliton *s,
                                   int dim,
                                   size_t n,
                                   double length,
                                   LsolField **out);

// # Safety
// `f` must come from this library and not be used afterwards.
void lsol_field_free(LsolField *f);

// Field values as split real and imaginary arrays, row-major.
//
// # Safety
// `re` and `im` must hold `cap` elements; `len` must be valid for a write.
LsolStatus lsol_field_values(const LsolField *f, double *re, double *im, size_t cap, size_t *len);

// Integrates the deterministic field equation in place from the field's
// current state for `t_end` time units with step `dt`.
//
// # Safety
// `f` and `p` must be live handles.
LsolStatus lsol_evolve(LsolField *f, const LsolParams *p, double dt, double t_end);

// Writes the field as a single LSOL1 record.
//
// # Safety
// `path` and `variable` must be NUL-terminated strings.
LsolStatus lsol_field_write(const LsolField *f,
                            const char *path,
                            const char *variable,
                            double time);

// Reads the first record of an LSOL1 file. `time` may be null.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid for a pointer write.
LsolStatus lsol_field_read(const char *path, LsolField **out, double *time);

// Monte-Carlo check of the composed noise moments at reduced intensity
// `intensity`; writes the largest z-score over both media.
//
// # Safety
// `p` must be a live handle with pump statistics set; `max_z` valid for a write.
LsolStatus lsol_noise_check(const LsolParams *p,
                            double intensity,
                            uint64_t samples,
                            uint64_t seed,
                            double *max_z);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSOL_H */
