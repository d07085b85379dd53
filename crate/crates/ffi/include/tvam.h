#ifndef TVAM_H
#define TVAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Optimization method.
typedef enum TvamMethod {
  TVAM_METHOD_L2N = 0,
  TVAM_METHOD_OSP = 1,
  TVAM_METHOD_OSPW = 2,
  TVAM_METHOD_OSMO = 3,
} TvamMethod;

// Result of every fallible call.
typedef enum TvamStatus {
  TVAM_STATUS_OK = 0,
  TVAM_STATUS_NULL_POINTER = 1,
  TVAM_STATUS_INVALID_ARGUMENT = 2,
  TVAM_STATUS_SHAPE_MISMATCH = 3,
  TVAM_STATUS_DEGENERATE_GEOMETRY = 4,
  TVAM_STATUS_DIVERGENCE = 5,
  TVAM_STATUS_OSMO_COLLAPSE = 6,
  TVAM_STATUS_BUFFER_TOO_SMALL = 7,
  TVAM_STATUS_IO = 8,
  TVAM_STATUS_PANIC = 9,
} TvamStatus;

// Target labels (0 external, 1 out-of-part, 2 in-part) for one or more slices.
typedef struct TvamGeometry TvamGeometry;

// Ray-voxel intersection operator for one slice size and angle set.
typedef struct TvamProjector TvamProjector;

// Plan and dose returned by [`tvam_solve`].
typedef struct TvamResult TvamResult;

// Parameters for [`tvam_solve`]. Obtain defaults from
// [`tvam_solve_params_default`].
typedef struct TvamSolveParams {
  enum TvamMethod method;
  double tau_lower;
  double tau_upper;
  // Dead-zone width; used by OSPW only.
  double w;
  uint64_t max_iters;
  // Sinogram floor; used by OSMO only.
  double min_projection_value;
} TvamSolveParams;

// Dose-quality metrics over a whole volume.
typedef struct TvamMetrics {
  double process_window;
  double in_part_dose_range;
  double voxel_error_rate;
  double max_dose;
  uint64_t n_in;
  uint64_t n_out;
} TvamMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tvam_version(void);

// Copies the calling thread's last error message into `buf` (truncated and
// NUL-terminated) and returns the buffer size needed for the full message,
// including the NUL. Returns 0 when the last call succeeded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t tvam_last_error(char *buf, size_t len);

// Centred disk of radius `radius_fraction * nx / 2` inside the inscribed circle.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum TvamStatus tvam_geometry_disk(size_t nx, double radius_fraction, struct TvamGeometry **out);

// Gyroid lattice with `cells` periods across the slice and `solid_fraction`
// of in-part volume.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum TvamStatus tvam_geometry_gyroid(size_t nx,
                                     size_t nz,
                                     size_t cells,
                                     double solid_fraction,
                                     struct TvamGeometry **out);

// Geometry from `nx * nx * nz` label bytes (0 external, 1 out, 2 in).
//
// # Safety
// `labels` must point to `len` readable bytes; `out` to a handle slot.
enum TvamStatus tvam_geometry_from_labels(size_t nx,
                                          size_t nz,
                                          const uint8_t *labels,
                                          size_t len,
                                          struct TvamGeometry **out);

// Writes the slice width and slice count.
//
// # Safety
// `geom` must be a live handle; `nx` and `nz` valid pointers.
enum TvamStatus tvam_geometry_shape(const struct TvamGeometry *geom, size_t *nx, size_t *nz);

// Writes the number of in-part, out-of-part and external voxels.
//
// # Safety
// `geom` must be a live handle; the count pointers must be valid.
enum TvamStatus tvam_geometry_counts(const struct TvamGeometry *geom,
                                     size_t *n_in,
                                     size_t *n_out,
                                     size_t *n_ext);

// Copies the label bytes into `buf`.
//
// # Safety
// `geom` must be a live handle; `buf` must hold `len` bytes.
enum TvamStatus tvam_geometry_labels(const struct TvamGeometry *geom, uint8_t *buf, size_t len);

// # Safety
// `geom` must be null or a handle not yet freed.
void tvam_geometry_free(struct TvamGeometry *geom);

// Builds the projector for `nx * nx` slices. `n_bins == 0` selects the
// smallest bin count covering the slice diagonal.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum TvamStatus tvam_projector_new(size_t nx,
                                   size_t n_angles,
                                   size_t n_bins,
                                   double angle_offset,
                                   struct TvamProjector **out);

// Writes slice width, angle count and bin count.
//
// # Safety
// `proj` must be a live handle; output pointers must be valid.
enum TvamStatus tvam_projector_shape(const struct TvamProjector *proj,
                                     size_t *nx,
                                     size_t *n_angles,
                                     size_t *n_bins);

// Projects `nz` slices of `image` (`nx*nx*nz` values) into `sino`
// (`n_angles*n_bins*nz` values).
//
// # Safety
// Pointers must reference buffers of the stated lengths.
enum TvamStatus tvam_projector_forward(const struct TvamProjector *proj,
                                       const float *image,
                                       size_t image_len,
                                       size_t nz,
                                       float *sino,
                                       size_t sino_len);

// Back-projects `nz` sinogram slices into `image`.
//
// # Safety
// Pointers must reference buffers of the stated lengths.
enum TvamStatus tvam_projector_backward(const struct TvamProjector *proj,
                                        const float *sino,
                                        size_t sino_len,
                                        size_t nz,
                                        float *image,
                                        size_t image_len);

// # Safety
// `proj` must be null or a handle not yet freed.
void tvam_projector_free(struct TvamProjector *proj);

// Default parameters for `method`: thresholds 0.70/0.90 (0.85/0.90 for
// OSMO), `w = 0`, 1000 iterations.
struct TvamSolveParams tvam_solve_params_default(enum TvamMethod method);

// Optimizes a plan for every slice of `geom`.
//
// # Safety
// `geom` and `proj` must be live handles, `params` valid and `out` a
// handle slot.
enum TvamStatus tvam_solve(const struct TvamGeometry *geom,
                           const struct TvamProjector *proj,
                           const struct TvamSolveParams *params,
                           struct TvamResult **out);

// Number of plan values (`n_angles * n_bins * nz`).
//
// # Safety
// `res` must be null or a live handle.
size_t tvam_result_plan_len(const struct TvamResult *res);

// Number of dose values (`nx * nx * nz`).
//
// # Safety
// `res` must be null or a live handle.
size_t tvam_result_dose_len(const struct TvamResult *res);

// Copies the plan into `buf`.
//
// # Safety
// `res` must be a live handle; `buf` must hold `len` floats.
enum TvamStatus tvam_result_plan(const struct TvamResult *res, float *buf, size_t len);

// Copies the dose into `buf`.
//
// # Safety
// `res` must be a live handle; `buf` must hold `len` floats.
enum TvamStatus tvam_result_dose(const struct TvamResult *res, float *buf, size_t len);

// # Safety
// `res` must be null or a handle not yet freed.
void tvam_result_free(struct TvamResult *res);

// Evaluates a dose volume against `geom`, trimming `alpha` percent from
// each end of the in-part and out-of-part distributions.
//
// # Safety
// `dose` must point to `len` floats; `geom` must be a live handle and `out`
// valid.
enum TvamStatus tvam_evaluate(const float *dose,
                              size_t len,
                              const struct TvamGeometry *geom,
                              double alpha,
                              struct TvamMetrics *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TVAM_H */
