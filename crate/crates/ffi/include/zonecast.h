#ifndef ZONECAST_H
#define ZONECAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ZcStatus {
  ZC_STATUS_OK = 0,
  ZC_STATUS_NULL_POINTER = 1,
  ZC_STATUS_INVALID_ARGUMENT = 2,
  ZC_STATUS_IO = 3,
  ZC_STATUS_OVERFLOW = 4,
  ZC_STATUS_INTERNAL = 5,
} ZcStatus;

typedef enum ZcTopology {
  ZC_TOPOLOGY_TORUS = 0,
  ZC_TOPOLOGY_GRID = 1,
} ZcTopology;

/**
 * Result of analyzing one Byzantine placement.
 */
typedef struct ZcAnalysis ZcAnalysis;

/**
 * Topology plus the order-`W` zone family.
 */
typedef struct ZcNetwork ZcNetwork;

/**
 * 1-based row `i` and column `j`.
 */
typedef struct ZcCoord {
  uint32_t i;
  uint32_t j;
} ZcCoord;

/**
 * Monte Carlo estimate. Fields that do not apply are NaN.
 */
typedef struct ZcEstimate {
  uint64_t trials;
  double p_hat;
  double ci95;
  double p_exists;
  double mean_reliable_frac;
} ZcEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *zc_last_error(void);

/**
 * Builds a network of `side x side` nodes with all zones of width `1..=order`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum ZcStatus zc_network_new(enum ZcTopology topology,
                             uint32_t side,
                             uint32_t order,
                             struct ZcNetwork **out);

/**
 * # Safety
 * `net` must be NULL or a handle from [`zc_network_new`] not yet freed.
 */
void zc_network_free(struct ZcNetwork *net);

/**
 * # Safety
 * `net` must be a live handle; the out pointers must be valid or NULL.
 */
enum ZcStatus zc_network_sizes(const struct ZcNetwork *net, size_t *nodes, size_t *zones);

/**
 * Message ceiling `d * n * (n + n_border * n_ctr)`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum ZcStatus zc_complexity_bound(uint64_t n,
                                  uint64_t d,
                                  uint64_t n_ctr,
                                  uint64_t n_border,
                                  uint64_t *out);

/**
 * Message ceiling for `net`, from its size, degree and zone family.
 *
 * # Safety
 * `net` must be a live handle and `out` valid for writing.
 */
enum ZcStatus zc_network_complexity_bound(const struct ZcNetwork *net, uint64_t *out);

/**
 * Runs the protocol without Byzantine nodes and reports message totals.
 *
 * # Safety
 * `net` must be a live handle; `standard` and `auth` valid for writing.
 */
enum ZcStatus zc_simulate_counts(const struct ZcNetwork *net,
                                 uint64_t seed,
                                 uint64_t *standard,
                                 uint64_t *auth);

/**
 * Analyzes a placement of `byz_len` Byzantine nodes, growing the
 * communicating set from `origin`.
 *
 * # Safety
 * `net` must be a live handle, `byz` valid for `byz_len` reads (may be
 * NULL when `byz_len` is 0), `out` valid for writing.
 */
enum ZcStatus zc_analyze(const struct ZcNetwork *net,
                         const struct ZcCoord *byz,
                         size_t byz_len,
                         struct ZcCoord origin,
                         struct ZcAnalysis **out);

/**
 * # Safety
 * `a` must be NULL or a handle from [`zc_analyze`] not yet freed.
 */
void zc_analysis_free(struct ZcAnalysis *a);

/**
 * Whether a safe cover was found, and the sizes of the safe,
 * communicating and reliable sets. NULL outputs are skipped.
 *
 * # Safety
 * `a` must be a live handle; outputs valid or NULL.
 */
enum ZcStatus zc_analysis_summary(const struct ZcAnalysis *a,
                                  bool *cover_found,
                                  size_t *safe,
                                  size_t *communicating,
                                  size_t *reliable);

/**
 * Whether the node at `at` is in the reliable set.
 *
 * # Safety
 * `a` must be a live handle and `out` valid for writing.
 */
enum ZcStatus zc_analysis_is_reliable(const struct ZcAnalysis *a, struct ZcCoord at, bool *out);

/**
 * Estimates the probability that a random pair communicates reliably.
 * `order` 0 selects the disjoint-path baseline.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum ZcStatus zc_estimate(enum ZcTopology topology,
                          uint32_t side,
                          uint32_t order,
                          size_t n_byz,
                          uint64_t trials,
                          uint64_t seed,
                          struct ZcEstimate *out);

/**
 * Zone order the network was built with.
 *
 * # Safety
 * `net` must be a live handle.
 */
uint32_t zc_network_order(const struct ZcNetwork *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZONECAST_H */
