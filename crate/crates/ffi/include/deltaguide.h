#ifndef DELTAGUIDE_H
#define DELTAGUIDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum DgStatus {
  DG_STATUS_OK = 0,
  DG_STATUS_NULL_POINTER = 1,
  /**
   * A parameter was rejected (including ε too large for the shape exponents).
   */
  DG_STATUS_INVALID_PARAM = 2,
  /**
   * A factorisation or iteration failed.
   */
  DG_STATUS_NUMERICAL = 3,
  /**
   * The caller's buffer is too short.
   */
  DG_STATUS_BUFFER_TOO_SMALL = 4,
  DG_STATUS_PANIC = 5,
} DgStatus;

/**
 * Mesh, waveguide discretisation and matching limit space for one parameter set.
 */
typedef struct DgPipeline DgPipeline;

/**
 * Sorted eigenvalues with their certified cutoff.
 */
typedef struct DgSpectrum DgSpectrum;

/**
 * Interval ends, coupling strength, shape exponents and ε.
 */
typedef struct DgParams {
  double ell_minus;
  double ell_plus;
  double gamma;
  double alpha;
  double beta;
  double epsilon;
} DgParams;

/**
 * Passage and room sizes derived from valid parameters.
 */
typedef struct DgShape {
  double passage_width;
  double passage_height;
  double room_side;
} DgShape;

/**
 * Counts from a randomized run of the abstract bounds.
 */
typedef struct DgSuiteSummary {
  size_t draws;
  size_t resolvent_violations;
  size_t spectral_violations;
  size_t same_space_violations;
  size_t quasi_unitary_violations;
  size_t failures;
  double resolvent_min_margin;
  double spectral_min_margin;
} DgSuiteSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message, NUL-terminated, into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes, or null with `len` = 0. `required` may be
 * null; otherwise it receives the needed buffer length including the terminator.
 */
enum DgStatus dg_last_error(char *buf, size_t len, size_t *required);

/**
 * Check parameters and write the derived sizes.
 *
 * # Safety
 * `params` must point to a valid `DgParams`; `shape` to writable storage for a `DgShape`.
 */
enum DgStatus dg_validate(const struct DgParams *params, struct DgShape *shape);

/**
 * Build mesh and discretisations at the default resolution times `mesh_scale`, with V = 0.
 *
 * # Safety
 * `params` must point to a valid `DgParams` and `out` to writable storage for a pointer.
 * The handle written to `*out` must be released with `dg_pipeline_free`.
 */
enum DgStatus dg_pipeline_new(const struct DgParams *params,
                              double mesh_scale,
                              struct DgPipeline **out);

/**
 * # Safety
 * `pipe` must come from `dg_pipeline_new` and not have been freed; null is a no-op.
 */
void dg_pipeline_free(struct DgPipeline *pipe);

/**
 * Conforming waveguide unknowns and limit-space unknowns.
 *
 * # Safety
 * `pipe` must be a live pipeline handle; `wave` and `limit` writable.
 */
enum DgStatus dg_pipeline_dims(const struct DgPipeline *pipe, size_t *wave, size_t *limit);

/**
 * Eigenvalues below `cutoff` of the waveguide (`which` = 0) or the limit operator (1).
 *
 * # Safety
 * `pipe` must be a live pipeline handle and `out` writable. Release the result with
 * `dg_spectrum_free`.
 */
enum DgStatus dg_pipeline_spectrum(const struct DgPipeline *pipe,
                                   uint32_t which,
                                   double cutoff,
                                   struct DgSpectrum **out);

/**
 * ‖R_ε J − J R₀‖ between the limit space and the waveguide.
 *
 * # Safety
 * `pipe` must be a live pipeline handle and `value` writable.
 */
enum DgStatus dg_pipeline_resolvent_defect(const struct DgPipeline *pipe, double *value);

/**
 * # Safety
 * `spec` must be a live spectrum handle and `len` writable.
 */
enum DgStatus dg_spectrum_len(const struct DgSpectrum *spec, size_t *len);

/**
 * Copy the eigenvalues into `buf`; `BufferTooSmall` if `len` is short.
 *
 * # Safety
 * `spec` must be a live spectrum handle; `buf` valid for `len` doubles.
 */
enum DgStatus dg_spectrum_values(const struct DgSpectrum *spec, double *buf, size_t len);

/**
 * Certified cutoff: every eigenvalue below it is in the list (infinite if all were found).
 *
 * # Safety
 * `spec` must be a live spectrum handle and `cutoff` writable.
 */
enum DgStatus dg_spectrum_cutoff(const struct DgSpectrum *spec, double *cutoff);

/**
 * # Safety
 * `spec` must come from this library and not have been freed; null is a no-op.
 */
void dg_spectrum_free(struct DgSpectrum *spec);

/**
 * Hausdorff distance after λ ↦ (1+λ)⁻¹, and the truncation bound to add to it.
 *
 * # Safety
 * `a`, `b` must be live spectrum handles; `value`, `bound` writable.
 */
enum DgStatus dg_tilde_hausdorff(const struct DgSpectrum *a,
                                 const struct DgSpectrum *b,
                                 double *value,
                                 double *bound);

/**
 * Band edges of the unit-spaced point-interaction comb: `edges[2i]`, `edges[2i+1]` are the
 * start and end of band i + 1.
 *
 * # Safety
 * `edges` must be valid for `2 * n_bands` doubles.
 */
enum DgStatus dg_kp_band_edges(double gamma, size_t n_bands, double *edges);

/**
 * Domination constants implied by a quasi-unitary defect δ < 2/3.
 *
 * # Safety
 * `mu` and `nu` must be writable.
 */
enum DgStatus dg_quasi_unitary_constants(double delta, double *mu, double *nu);

/**
 * Randomized run of the abstract comparison bounds.
 *
 * # Safety
 * `out` must be writable.
 */
enum DgStatus dg_abstract_suite(size_t draws,
                                size_t max_dim,
                                uint64_t seed,
                                struct DgSuiteSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELTAGUIDE_H */
