#ifndef FLUID_DEMOCRACY_H
#define FLUID_DEMOCRACY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Marks "no value" in `size_t` outputs.
 */
#define FLUID_NONE ~0

enum FluidStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  FLUID_STATUS_OK = 0,
  FLUID_STATUS_NULL_POINTER = 1,
  FLUID_STATUS_INVALID_ARGUMENT = 2,
  FLUID_STATUS_STRUCTURAL = 3,
  FLUID_STATUS_DEGENERATE_ELECTION = 4,
  FLUID_STATUS_NUMERICAL = 5,
  FLUID_STATUS_BUDGET_INFEASIBLE = 6,
  FLUID_STATUS_BUFFER_TOO_SMALL = 7,
  FLUID_STATUS_INTERNAL = 8,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum FluidStatus FluidStatus;
#else
typedef int32_t FluidStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Outcome of an adversary search.
 */
enum FluidSearchStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  FLUID_SEARCH_STATUS_FOUND = 0,
  /**
   * No topology within the agent bound; the true minimum is larger.
   */
  FLUID_SEARCH_STATUS_EXCEEDS_BOUND = 1,
  FLUID_SEARCH_STATUS_INFEASIBLE = 2,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum FluidSearchStatus FluidSearchStatus;
#else
typedef int32_t FluidSearchStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque delegation graph.
 */
typedef struct FluidGraph FluidGraph;

typedef struct FluidSweepRow {
  double tau;
  size_t elector_count;
  double c_total;
  double honest_weight;
  /**
   * `FLUID_NONE` unless `status` is `Found`.
   */
  size_t min_adversaries;
  FluidSearchStatus status;
} FluidSweepRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fluid_last_error(void);

/**
 * Builds a graph from `edge_count` undirected edges stored as consecutive
 * pairs in `edges` and one competence per voter. Every voter delegates to
 * its most competent neighbour when that neighbour is more competent.
 *
 * # Safety
 * `edges` must hold `2 * edge_count` values and `competence` `n` values.
 */
FluidStatus fluid_graph_from_edges(size_t n,
                                   const size_t *edges,
                                   size_t edge_count,
                                   const double *competence,
                                   struct FluidGraph **out);

/**
 * Star/chain composite with default competence intervals.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
FluidStatus fluid_graph_composite(size_t stars,
                                  size_t star_size,
                                  size_t chains,
                                  size_t chain_size,
                                  uint64_t seed,
                                  struct FluidGraph **out);

/**
 * Half 10-stars, half 10-chains on `n` voters (a multiple of 20) with the
 * default competence constants.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
FluidStatus fluid_graph_theorem1(size_t n, uint64_t seed, struct FluidGraph **out);

/**
 * # Safety
 * `graph` must come from a `fluid_graph_*` constructor and not be freed twice.
 */
void fluid_graph_free(struct FluidGraph *graph);

/**
 * Number of voters, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t fluid_graph_voter_count(const struct FluidGraph *graph);

/**
 * Writes each voter's delegate, or `FLUID_NONE` for gurus.
 *
 * # Safety
 * `out` must hold `len` values.
 */
FluidStatus fluid_graph_delegates(const struct FluidGraph *graph, size_t *out, size_t len);

/**
 * Flow and cast weight per voter under mechanism `(alpha, beta)`.
 * Either output may be null to skip it.
 *
 * # Safety
 * Non-null outputs must hold `len` values.
 */
FluidStatus fluid_compute_weights(const struct FluidGraph *graph,
                                  double alpha,
                                  double beta,
                                  double *flow,
                                  double *cast_weight,
                                  size_t len);

/**
 * Monte Carlo accuracy of the weighted vote among voters above `tau`.
 *
 * # Safety
 * `p_hat` and `half_width` must be valid pointers; `half_width` may be null.
 */
FluidStatus fluid_estimate_accuracy(const struct FluidGraph *graph,
                                    double alpha,
                                    double beta,
                                    double tau,
                                    uint64_t trials,
                                    uint64_t seed,
                                    double *p_hat,
                                    double *half_width);

/**
 * Fewest adversarial agents whose above-threshold members, at most
 * `core_budget` of them, cast more than `target_weight`.
 *
 * # Safety
 * `status` and `total_agents` must be valid pointers.
 */
FluidStatus fluid_min_adversaries(double alpha,
                                  double tau,
                                  double target_weight,
                                  size_t core_budget,
                                  FluidSearchStatus *status,
                                  size_t *total_agents);

/**
 * Viscous-retained threshold sweep over `grid`, one row per threshold.
 *
 * # Safety
 * `grid` must hold `grid_len` values and `rows` at least `grid_len` rows.
 */
FluidStatus fluid_sweep_tau(const struct FluidGraph *graph,
                            double alpha,
                            double c,
                            double c_adv,
                            const double *grid,
                            size_t grid_len,
                            struct FluidSweepRow *rows,
                            size_t rows_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUID_DEMOCRACY_H */
