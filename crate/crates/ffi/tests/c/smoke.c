#include <stdio.h>
#include <stdlib.h>
#include "tvam.h"

#define CHECK(call)                                                   \
  do {                                                                \
    TvamStatus s_ = (call);                                           \
    if (s_ != TVAM_STATUS_OK) {                                       \
      char msg[256];                                                  \
      tvam_last_error(msg, sizeof msg);                               \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, msg);   \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  TvamGeometry *geom = NULL;
  TvamProjector *proj = NULL;
  TvamResult *res = NULL;
  CHECK(tvam_geometry_disk(32, 0.5, &geom));
  CHECK(tvam_projector_new(32, 45, 0, 0.0, &proj));
  TvamSolveParams p = tvam_solve_params_default(TVAM_METHOD_OSPW);
  p.max_iters = 40;
  CHECK(tvam_solve(geom, proj, &p, &res));
  size_t n = tvam_result_dose_len(res);
  float *dose = malloc(n * sizeof *dose);
  CHECK(tvam_result_dose(res, dose, n));
  TvamMetrics m;
  CHECK(tvam_evaluate(dose, n, geom, 0.0, &m));
  if (tvam_geometry_disk(4, 0.5, &geom) != TVAM_STATUS_INVALID_ARGUMENT) return 2;
  printf("%s pw=%.4f n_in=%llu\n", tvam_version(), m.process_window,
         (unsigned long long)m.n_in);
  free(dose);
  tvam_result_free(res);
  tvam_projector_free(proj);
  tvam_geometry_free(geom);
  return m.process_window > 0.0 ? 0 : 3;
}
