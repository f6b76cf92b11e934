#ifndef ORDOPT_H
#define ORDOPT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OrdoptStatus {
  ORDOPT_STATUS_OK = 0,
  ORDOPT_STATUS_NULL_ARGUMENT = 1,
  ORDOPT_STATUS_INVALID_UTF8 = 2,
  // Malformed JSON or a document that fails validation.
  ORDOPT_STATUS_INVALID_INPUT = 3,
  // Cost or block parameters out of range.
  ORDOPT_STATUS_CONFIG = 4,
  // A search or oracle exceeded its size guard.
  ORDOPT_STATUS_GUARD = 5,
  // No plan satisfies the requested order.
  ORDOPT_STATUS_UNSATISFIABLE = 6,
  // Sort input was not ordered on the declared prefix.
  ORDOPT_STATUS_UNSORTED_INPUT = 7,
  ORDOPT_STATUS_INVALID_ARGUMENT = 8,
  ORDOPT_STATUS_PANIC = 9,
} OrdoptStatus;

// Values accepted wherever a heuristic is passed as `uint32_t`.
typedef enum OrdoptHeuristic {
  ORDOPT_HEURISTIC_ARBITRARY = 0,
  ORDOPT_HEURISTIC_POSTGRES = 1,
  ORDOPT_HEURISTIC_FAVORABLE = 2,
  ORDOPT_HEURISTIC_EXHAUSTIVE = 3,
} OrdoptHeuristic;

// A parsed catalog and query with its cost parameters.
typedef struct OrdoptQuery OrdoptQuery;

typedef struct OrdoptSortConfig {
  // Sort on key positions `0..target_keys`.
  uint32_t target_keys;
  // Input is ordered on key positions `0..known_prefix`; 0 selects the
  // plain run-generation sort, anything larger the segment-wise sort.
  uint32_t known_prefix;
  uint32_t payload_bytes;
  uint64_t block_bytes;
  uint64_t memory_blocks;
} OrdoptSortConfig;

typedef struct OrdoptSortMetrics {
  uint64_t run_blocks_written;
  uint64_t run_blocks_read;
  uint64_t comparisons;
  uint64_t positions_inspected;
  uint64_t tuples_in_before_first_out;
  uint64_t runs_generated;
  uint64_t segments;
  uint64_t intermediate_merges;
  uint64_t max_fan_in;
  uint64_t tuples_out;
} OrdoptSortMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ordopt_version(void);

// Message for the last failed call on this thread, or null after a success.
// The pointer stays valid until the next library call on the same thread.
const char *ordopt_last_error_message(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` is null or was returned by this library and not yet freed.
void ordopt_string_free(char *s);

// Parse a catalog and query, both JSON documents. `config_json` may be null
// for default cost parameters.
//
// # Safety
// String arguments are null or NUL-terminated; `out` is writable.
enum OrdoptStatus ordopt_query_new(const char *catalog_json,
                                   const char *query_json,
                                   const char *config_json,
                                   struct OrdoptQuery **out);

// # Safety
// `q` is null or a handle from [`ordopt_query_new`] not yet freed.
void ordopt_query_free(struct OrdoptQuery *q);

// Optimize with one of the [`OrdoptHeuristic`] values, optionally followed
// by merge-order refinement. `out_cost` and `out_plan_json` may each be
// null; the plan document can be fed back to [`ordopt_refine_plan`].
//
// # Safety
// `q` is a live handle; non-null out pointers are writable.
enum OrdoptStatus ordopt_query_optimize(const struct OrdoptQuery *q,
                                        uint32_t heuristic_id,
                                        bool refine,
                                        double *out_cost,
                                        char **out_plan_json);

// Favorable orders of every node as a JSON array of
// `{"node", "label", "orders"}` objects.
//
// # Safety
// `q` is a live handle; `out_json` is writable.
enum OrdoptStatus ordopt_query_favorable_orders(const struct OrdoptQuery *q, char **out_json);

// Refine the merge orders of a plan document produced by
// [`ordopt_query_optimize`]. The result is the original plan when
// refinement does not lower the cost; `out_accepted` reports which.
//
// # Safety
// `plan_json` is NUL-terminated; non-null out pointers are writable.
enum OrdoptStatus ordopt_refine_plan(const char *plan_json,
                                     bool *out_accepted,
                                     char **out_plan_json);

// Sort a synthetic stream of `rows` tuples whose first key is constant
// within segments of `segment_rows` and increases between segments.
//
// # Safety
// `cfg` is readable; `out_metrics` is writable.
enum OrdoptStatus ordopt_sort_generated(const struct OrdoptSortConfig *cfg,
                                        uint64_t rows,
                                        uint64_t segment_rows,
                                        uint64_t seed,
                                        struct OrdoptSortMetrics *out_metrics);

// Sort `rows` tuples of `cfg.target_keys` keys each, given row-major in
// `keys`, writing the sorted keys to `out_keys` (same shape). Input must
// be ordered on the first `cfg.known_prefix` keys.
//
// # Safety
// `keys` and `out_keys` each hold `rows * cfg.target_keys` values;
// `out_metrics` is null or writable.
enum OrdoptStatus ordopt_sort_keys(const struct OrdoptSortConfig *cfg,
                                   const int64_t *keys,
                                   size_t rows,
                                   int64_t *out_keys,
                                   struct OrdoptSortMetrics *out_metrics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORDOPT_H */
