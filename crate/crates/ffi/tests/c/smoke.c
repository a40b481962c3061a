#include <math.h>
#include <stdio.h>
#include "filterlab.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    FlStatus s_ = (call);                                                      \
    if (s_ != FL_STATUS_OK) {                                                  \
      const char *m_ = fl_last_error_message();                                \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, m_ ? m_ : "?");  \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(void) {
  FlPlant *golden = NULL;
  CHECK(fl_plant_from_json("{\"A\":[[[1.0]]],\"Q\":[[[1.0]]],"
                           "\"sensors\":[{\"C\":[[[1.0]]],\"R\":[[[1.0]]]}]}",
                           &golden));
  FlSolution *sol = NULL;
  CHECK(fl_dpre_solve(golden, 1e-13, &sol));
  double p = 0.0;
  CHECK(fl_solution_matrix(sol, 0, &p, 1));
  printf("golden %.10f\n", p);
  if (fabs(p - 1.6180339887498949) > 1e-12) return 2;
  fl_solution_free(sol);
  fl_plant_free(golden);

  FlPlant *plant = NULL;
  FlNetwork *net = NULL;
  size_t n = 0, sensors = 0, period = 0, diameter = 0;
  CHECK(fl_plant_paper(&plant));
  CHECK(fl_plant_dims(plant, &n, &sensors, &period));
  CHECK(fl_network_random_geometric(sensors, 300.0, 130.0, 1, &net));
  CHECK(fl_network_diameter(net, &diameter));
  CHECK(fl_cmdf_error_dple(plant, net, diameter, 0, 0.0, &sol));
  double avg = 0.0;
  CHECK(fl_solution_average_trace(sol, &avg));
  printf("n %zu sensors %zu period %zu diameter %zu avg %.6f\n", n, sensors, period, diameter, avg);
  fl_solution_free(sol);
  fl_network_free(net);

  if (fl_dpre_solve(NULL, 0.0, &sol) != FL_STATUS_NULL_POINTER) return 3;
  if (fl_last_error_message() == NULL) return 4;
  fl_plant_free(plant);
  return 0;
}
