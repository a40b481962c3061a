#ifndef FILTERLAB_H
#define FILTERLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  /**
   * Malformed arguments, JSON, or out-of-range indices.
   */
  FL_STATUS_INVALID_INPUT = 2,
  /**
   * The computation itself failed (no convergence, unobservable, ...).
   */
  FL_STATUS_NUMERICAL = 3,
  /**
   * A Rust panic was caught at the boundary.
   */
  FL_STATUS_PANIC = 4,
} FlStatus;

/**
 * Sensor graph with its consensus weights.
 */
typedef struct FlNetwork FlNetwork;

/**
 * Plant model handle.
 */
typedef struct FlPlant FlPlant;

/**
 * Periodic matrix sequence returned by the solvers.
 */
typedef struct FlSolution FlSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *fl_last_error_message(void);

/**
 * The built-in 20-sensor, period-30 benchmark plant.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle to.
 */
enum FlStatus fl_plant_paper(struct FlPlant **out);

/**
 * Parses a plant from its JSON description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FlStatus fl_plant_from_json(const char *json, struct FlPlant **out);

/**
 * # Safety
 * `plant` must come from this library and not be used afterwards. NULL is ignored.
 */
void fl_plant_free(struct FlPlant *plant);

/**
 * State dimension, sensor count and period. Any out pointer may be NULL.
 *
 * # Safety
 * `plant` must be a live handle; non-NULL out pointers must be writable.
 */
enum FlStatus fl_plant_dims(const struct FlPlant *plant,
                            size_t *state_dim,
                            size_t *sensors,
                            size_t *period);

/**
 * Whether the stacked pair `(A, C)` passes the uniform observability test.
 *
 * # Safety
 * `plant` must be a live handle and `out` writable.
 */
enum FlStatus fl_uniform_observability(const struct FlPlant *plant, bool *out);

/**
 * Centralized periodic Riccati solution. `tol = 0` selects the default.
 *
 * # Safety
 * `plant` must be a live handle and `out` writable.
 */
enum FlStatus fl_dpre_solve(const struct FlPlant *plant, double tol, struct FlSolution **out);

/**
 * Connected random geometric graph (first connected draw from `seed` on)
 * with Metropolis weights.
 *
 * # Safety
 * `out` must be writable.
 */
enum FlStatus fl_network_random_geometric(size_t nodes,
                                          double side,
                                          double radius,
                                          uint64_t seed,
                                          struct FlNetwork **out);

/**
 * Graph from `edge_count` undirected 0-based pairs `edges[2e], edges[2e+1]`,
 * with Metropolis weights.
 *
 * # Safety
 * `edges` must point to `2 * edge_count` values (or be NULL when the count is 0); `out` writable.
 */
enum FlStatus fl_network_from_edges(size_t nodes,
                                    const size_t *edges,
                                    size_t edge_count,
                                    struct FlNetwork **out);

/**
 * # Safety
 * `net` must come from this library and not be used afterwards. NULL is ignored.
 */
void fl_network_free(struct FlNetwork *net);

/**
 * # Safety
 * `net` must be a live handle and `out` writable.
 */
enum FlStatus fl_network_diameter(const struct FlNetwork *net, size_t *out);

/**
 * Second largest eigenvalue modulus of the weight matrix.
 *
 * # Safety
 * `net` must be a live handle and `out` writable.
 */
enum FlStatus fl_network_sigma2(const struct FlNetwork *net, double *out);

/**
 * Riccati solution of the filter at `sensor` (0-based) after `steps` consensus rounds.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FlStatus fl_cmdf_dpre(const struct FlPlant *plant,
                           const struct FlNetwork *net,
                           size_t steps,
                           size_t sensor,
                           double tol,
                           struct FlSolution **out);

/**
 * True steady-state error covariance of the filter at `sensor` (0-based).
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FlStatus fl_cmdf_error_dple(const struct FlPlant *plant,
                                 const struct FlNetwork *net,
                                 size_t steps,
                                 size_t sensor,
                                 double tol,
                                 struct FlSolution **out);

/**
 * # Safety
 * `sol` must come from this library and not be used afterwards. NULL is ignored.
 */
void fl_solution_free(struct FlSolution *sol);

/**
 * Period and matrix dimension. Either out pointer may be NULL.
 *
 * # Safety
 * `sol` must be a live handle; non-NULL out pointers writable.
 */
enum FlStatus fl_solution_period(const struct FlSolution *sol, size_t *period, size_t *dim);

/**
 * Copies the matrix at step `k` (taken modulo the period) row-major into
 * `buffer`, which must hold `len >= dim * dim` values.
 *
 * # Safety
 * `sol` must be a live handle and `buffer` writable for `len` values.
 */
enum FlStatus fl_solution_matrix(const struct FlSolution *sol,
                                 size_t k,
                                 double *buffer,
                                 size_t len);

/**
 * Mean of the traces over one period.
 *
 * # Safety
 * `sol` must be a live handle and `out` writable.
 */
enum FlStatus fl_solution_average_trace(const struct FlSolution *sol, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FILTERLAB_H */
