#ifndef EXCESS_MASS_H
#define EXCESS_MASS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call.
 */
typedef enum EmStatus {
  EM_STATUS_OK = 0,
  EM_STATUS_NULL_POINTER = 1,
  EM_STATUS_INVALID_ARGUMENT = 2,
  EM_STATUS_INPUT_ERROR = 3,
  EM_STATUS_NUMERIC_ERROR = 4,
  EM_STATUS_PANIC = 5,
} EmStatus;

/**
 * Estimator selector for [`em_estimate_curve`].
 */
typedef enum EmMethod {
  EM_METHOD_PLUGIN = 0,
  EM_METHOD_FUNCTIONAL_MEAN = 1,
  EM_METHOD_FUNCTIONAL_CORRECTED = 2,
  EM_METHOD_WAVELET = 3,
} EmMethod;

/**
 * Excess-mass values on a level grid.
 */
typedef struct EmCurve EmCurve;

/**
 * A mixture density.
 */
typedef struct EmDensity EmDensity;

/**
 * A sample of points.
 */
typedef struct EmSample EmSample;

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *em_last_error_message(void);

/**
 * Built-in density by id (`a`..`d`, `A`..`D`).
 *
 * # Safety
 * `id` must be a nul-terminated string and `out` a valid pointer.
 */
enum EmStatus em_density_builtin(const char *id, struct EmDensity **out);

/**
 * Density from its JSON description.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum EmStatus em_density_from_json(const char *json, struct EmDensity **out);

/**
 * # Safety
 * `density` must come from this library or be NULL.
 */
void em_density_free(struct EmDensity *density);

/**
 * Dimension of the density, 0 for NULL.
 *
 * # Safety
 * `density` must be a live handle or NULL.
 */
uintptr_t em_density_dimension(const struct EmDensity *density);

/**
 * Density value at a point of `len` coordinates.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` to one double.
 */
enum EmStatus em_density_pdf(const struct EmDensity *density,
                             const double *x,
                             uintptr_t len,
                             double *out);

/**
 * `n` draws from the density with a seed.
 *
 * # Safety
 * `density` must be a live handle and `out` a valid pointer.
 */
enum EmStatus em_density_sample(const struct EmDensity *density,
                                uintptr_t n,
                                uint64_t seed,
                                struct EmSample **out);

/**
 * Exact excess mass at one level by quadrature; `grid_points` 0 picks the default.
 *
 * # Safety
 * `density` must be a live handle and `out` point to one double.
 */
enum EmStatus em_oracle_excess_mass(const struct EmDensity *density,
                                    double level,
                                    uintptr_t grid_points,
                                    double *out);

/**
 * Exact excess-mass curve on ascending levels.
 *
 * # Safety
 * `levels` must point to `count` doubles and `out` be a valid pointer.
 */
enum EmStatus em_oracle_curve(const struct EmDensity *density,
                              const double *levels,
                              uintptr_t count,
                              struct EmCurve **out);

/**
 * Sample from `n` row-major points of dimension `dim`.
 *
 * # Safety
 * `points` must point to `n * dim` doubles and `out` be a valid pointer.
 */
enum EmStatus em_sample_from_points(const double *points,
                                    uintptr_t n,
                                    uintptr_t dim,
                                    struct EmSample **out);

/**
 * # Safety
 * `sample` must come from this library or be NULL.
 */
void em_sample_free(struct EmSample *sample);

/**
 * Number of points, 0 for NULL.
 *
 * # Safety
 * `sample` must be a live handle or NULL.
 */
uintptr_t em_sample_len(const struct EmSample *sample);

/**
 * Dimension of the points, 0 for NULL.
 *
 * # Safety
 * `sample` must be a live handle or NULL.
 */
uintptr_t em_sample_dimension(const struct EmSample *sample);

/**
 * Copies the row-major points into `out`, which holds `capacity` doubles.
 *
 * # Safety
 * `out` must point to `capacity` writable doubles.
 */
enum EmStatus em_sample_points(const struct EmSample *sample, double *out, uintptr_t capacity);

/**
 * Cosine coefficients `c_0..c_order` of `(|u| - level)_+` on scale `scale`;
 * `out` must hold `order + 1` doubles.
 *
 * # Safety
 * `out` must point to `capacity` writable doubles.
 */
enum EmStatus em_coefficients(double level,
                              uintptr_t order,
                              double scale,
                              double *out,
                              uintptr_t capacity);

/**
 * Estimated excess-mass curve of a sample on ascending levels.
 *
 * The integration box is the default box of `support` when given, else the
 * data range padded by four reference bandwidths. `order` 0 and
 * `bootstrap` 0 select the automatic order and 100 replications.
 *
 * # Safety
 * Handles must be live (`support` may be NULL), `levels` must point to
 * `count` doubles and `out` be a valid pointer.
 */
enum EmStatus em_estimate_curve(const struct EmSample *sample,
                                const struct EmDensity *support,
                                const double *levels,
                                uintptr_t count,
                                enum EmMethod method,
                                uintptr_t order,
                                uintptr_t bootstrap,
                                uint64_t seed,
                                struct EmCurve **out);

/**
 * # Safety
 * `curve` must come from this library or be NULL.
 */
void em_curve_free(struct EmCurve *curve);

/**
 * Number of levels, 0 for NULL.
 *
 * # Safety
 * `curve` must be a live handle or NULL.
 */
uintptr_t em_curve_len(const struct EmCurve *curve);

/**
 * Copies the levels into `out`, which holds `capacity` doubles.
 *
 * # Safety
 * `out` must point to `capacity` writable doubles.
 */
enum EmStatus em_curve_levels(const struct EmCurve *curve, double *out, uintptr_t capacity);

/**
 * Copies the values into `out`, which holds `capacity` doubles.
 *
 * # Safety
 * `out` must point to `capacity` writable doubles.
 */
enum EmStatus em_curve_values(const struct EmCurve *curve, double *out, uintptr_t capacity);

#endif  /* EXCESS_MASS_H */
