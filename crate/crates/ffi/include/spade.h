/* Generated by cbindgen. Do not edit. */

#ifndef SPADE_H
#define SPADE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SPADE_FLAG_SMALL_SAMPLE 1

#define SPADE_FLAG_FEW_RUNS 2

#define SPADE_FLAG_DEGENERATE 4

#define SPADE_FLAG_BOUNDARY 8

typedef enum SpadeStatus {
  SPADE_STATUS_OK = 0,
  SPADE_STATUS_NULL_POINTER = 1,
  SPADE_STATUS_INVALID_INPUT = 2,
  SPADE_STATUS_QUADRATURE_NOT_CONVERGED = 3,
  SPADE_STATUS_NUMERICAL_HEALTH = 4,
  SPADE_STATUS_UNBOUNDED_UNCERTAINTY = 5,
  SPADE_STATUS_CROSSOVER_REGIME = 6,
  SPADE_STATUS_BUFFER_TOO_SMALL = 7,
  SPADE_STATUS_PANIC = 8,
} SpadeStatus;

typedef enum SpadeCutoffKind {
  SPADE_CUTOFF_KIND_PER_INDEX = 0,
  SPADE_CUTOFF_KIND_TOTAL_ORDER = 1,
} SpadeCutoffKind;

typedef enum SpadeLikelihood {
  SPADE_LIKELIHOOD_WITH_OVERFLOW = 0,
  SPADE_LIKELIHOOD_DETECTED_ONLY = 1,
} SpadeLikelihood;

/**
 * Opaque dynamics model.
 */
typedef struct SpadeModel SpadeModel;

/**
 * Source pair geometry. `d` and `w` share a length unit; `xi` is the
 * axis offset in units of `w`.
 */
typedef struct SpadeGeometry {
  double d;
  double w;
  double phi;
  double theta;
  double v;
  double xi;
} SpadeGeometry;

/**
 * Summary of a repeated estimation experiment. Lengths share the unit of
 * the geometry.
 */
typedef struct SpadeEstimateReport {
  double d_true;
  double d_hat_mean;
  double d_hat_std;
  double bias;
  double crb;
  double crb_truncated;
  double efficiency;
  /**
   * Bitwise OR of the `SPADE_FLAG_*` values.
   */
  uint32_t flags;
} SpadeEstimateReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_static(double phi, double theta, struct SpadeModel **out);

/**
 * Constant-rate rotation of the azimuth at fixed polar angle.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_phi_rotation(double theta, struct SpadeModel **out);

/**
 * `φ(t) = amplitude · sin(2πt/T)` at fixed polar angle.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_phi_oscillation(double theta,
                                             double amplitude,
                                             struct SpadeModel **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_theta_rotation(double phi, struct SpadeModel **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_uniform_sphere(struct SpadeModel **out);

/**
 * Discrete orientation mixture with `len` rows.
 *
 * # Safety
 * `phi`, `theta` and `weight` must each point to `len` readable values.
 */
enum SpadeStatus spade_model_density_table(const double *phi,
                                           const double *theta,
                                           const double *weight,
                                           size_t len,
                                           struct SpadeModel **out);

/**
 * Separation `x(t) = x̄(1 + a1 cos 2πt/T)` in the imaging plane.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_proportional_oscillation(double a1, struct SpadeModel **out);

/**
 * Separation `x(t) = x̄ + a2 cos 2πt/T` in the imaging plane.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SpadeStatus spade_model_fixed_amplitude_oscillation(double a2, struct SpadeModel **out);

/**
 * # Safety
 * `model` must be null or a handle from a `spade_model_*` constructor
 * that has not been freed.
 */
void spade_model_free(struct SpadeModel *model);

/**
 * Averaged detection probabilities in row-major order, index
 * `n * (max + 1) + m`; modes outside the cutoff are written as zero.
 * `len` must be at least `(max + 1)²`.
 *
 * # Safety
 * Pointers must be valid; `out_probs` must have room for `len` values.
 */
enum SpadeStatus spade_mode_probabilities(const struct SpadeModel *model,
                                          const struct SpadeGeometry *geom,
                                          size_t max,
                                          enum SpadeCutoffKind kind,
                                          double *out_probs,
                                          size_t len,
                                          double *out_overflow);

/**
 * Fisher information for `d` in length⁻². `out_per_mode` may be null;
 * otherwise it receives the per-mode terms in the layout of
 * [`spade_mode_probabilities`].
 *
 * # Safety
 * Pointers must be valid; `out_per_mode`, if non-null, must have room for
 * `len` values.
 */
enum SpadeStatus spade_fisher_information(const struct SpadeModel *model,
                                          const struct SpadeGeometry *geom,
                                          size_t max,
                                          enum SpadeCutoffKind kind,
                                          double *out_per_mode,
                                          size_t len,
                                          double *out_total);

/**
 * `1/√(N F)`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum SpadeStatus spade_cramer_rao_bound(double fisher, uint64_t photons, double *out);

/**
 * Small-separation limit of `w² F` for axis offset `kappa`, brightness
 * `v` and angular factor `c`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum SpadeStatus spade_small_separation_limit(double kappa, double v, double c, double *out);

/**
 * # Safety
 * `out_kappa` and `out_v` must be valid for writing.
 */
enum SpadeStatus spade_star_parameters(double m1, double m2, double *out_kappa, double *out_v);

/**
 * Direct-imaging Fisher information for `d` in length⁻².
 *
 * # Safety
 * Pointers must be valid.
 */
enum SpadeStatus spade_di_fisher_information(const struct SpadeModel *model,
                                             const struct SpadeGeometry *geom,
                                             double *out);

/**
 * Repeated simulate-and-estimate runs.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SpadeStatus spade_crb_consistency(const struct SpadeModel *model,
                                       const struct SpadeGeometry *geom,
                                       size_t max,
                                       uint64_t photons,
                                       size_t runs,
                                       uint64_t seed,
                                       enum SpadeLikelihood likelihood,
                                       struct SpadeEstimateReport *out);

/**
 * Static description of a status code.
 */
const char *spade_status_message(enum SpadeStatus status);

/**
 * Copy the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * including the terminator, or 0 when there is no message.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t spade_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *spade_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPADE_H */
