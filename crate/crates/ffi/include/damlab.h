#ifndef DAMLAB_H
#define DAMLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum DamlabStatus {
  DAMLAB_STATUS_OK = 0,
  DAMLAB_STATUS_PARAMETER = 1,
  DAMLAB_STATUS_CONTRACT = 2,
  DAMLAB_STATUS_RESIDENCY = 3,
  DAMLAB_STATUS_BELOW_K0 = 4,
  DAMLAB_STATUS_PARSE = 5,
  DAMLAB_STATUS_ORACLE = 6,
  DAMLAB_STATUS_IO = 7,
  DAMLAB_STATUS_NULL_ARGUMENT = 8,
  DAMLAB_STATUS_INVALID_UTF8 = 9,
  DAMLAB_STATUS_PANIC = 10,
} DamlabStatus;

/**
 * A generated or parsed instance.
 */
typedef struct DamlabInstance DamlabInstance;

/**
 * Machine and algorithm settings for [`damlab_run`].
 */
typedef struct DamlabRunConfig {
  uint64_t b;
  uint64_t m;
  double price_a;
  double price_b;
  double price_c;
  /**
   * Levels per phase for the 2^B-tree sort; 0 selects the validity formula.
   */
  uint64_t j;
  /**
   * Node cap for the 2^B-tree; 0 selects the default.
   */
  uint64_t node_budget;
} DamlabRunConfig;

/**
 * Numeric columns of one experiment row.
 */
typedef struct DamlabRow {
  uint64_t s;
  uint64_t l;
  uint64_t w;
  uint64_t k;
  uint64_t b;
  uint64_t m;
  uint64_t seed;
  uint64_t reads;
  uint64_t writes;
  uint64_t total_ios;
  double bound_lower;
  double bound_upper;
  double ratio_upper;
} DamlabRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on the same thread.
 */
const char *damlab_last_error(void);

/**
 * Static CSV header matching [`damlab_run_csv`] rows.
 */
const char *damlab_csv_header(void);

/**
 * Generates an instance with near-uniform stripe sizes.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DamlabStatus damlab_instance_generate(uint64_t small,
                                           uint64_t large_count,
                                           uint64_t width,
                                           uint64_t stripes,
                                           uint64_t seed,
                                           struct DamlabInstance **out);

/**
 * Parses an instance from its text format.
 *
 * # Safety
 * `src` must be a NUL-terminated string; `out` must be valid for a pointer write.
 */
enum DamlabStatus damlab_instance_parse(const char *src, struct DamlabInstance **out);

/**
 * Releases an instance. NULL is ignored.
 *
 * # Safety
 * `inst` must come from this library and not have been freed.
 */
void damlab_instance_free(struct DamlabInstance *inst);

/**
 * Writes the small count, large count, width and stripe count.
 *
 * # Safety
 * `inst` must be a live handle; each output pointer must be valid or NULL.
 */
enum DamlabStatus damlab_instance_shape(const struct DamlabInstance *inst,
                                        uint64_t *small,
                                        uint64_t *large_count,
                                        uint64_t *width,
                                        uint64_t *stripes);

/**
 * The instance in its text format; free with [`damlab_string_free`].
 * Returns NULL when `inst` is NULL.
 *
 * # Safety
 * `inst` must be a live handle or NULL.
 */
char *damlab_instance_to_text(const struct DamlabInstance *inst);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void damlab_string_free(char *s);

/**
 * Runs `algo` (`ram`, `sort-dam`, `ple-dfs`, `ple-bfs`, `ple-auto`,
 * `sampled` or `2btree`) and checks it against its oracle.
 *
 * # Safety
 * `inst` must be a live handle, `algo` NUL-terminated, `cfg` and `row` valid.
 */
enum DamlabStatus damlab_run(const struct DamlabInstance *inst,
                             const char *algo,
                             const struct DamlabRunConfig *cfg,
                             struct DamlabRow *row);

/**
 * Like [`damlab_run`], producing the CSV row as a string in `out`; free it
 * with [`damlab_string_free`].
 *
 * # Safety
 * As [`damlab_run`]; `out` must be valid for a pointer write.
 */
enum DamlabStatus damlab_run_csv(const struct DamlabInstance *inst,
                                 const char *algo,
                                 const struct DamlabRunConfig *cfg,
                                 char **out);

/**
 * Lower and upper placement bounds for one parameter set; `l` is the total
 * large volume.
 *
 * # Safety
 * `lower` and `upper` must be valid for writes.
 */
enum DamlabStatus damlab_ple_bounds(uint64_t s,
                                    uint64_t l,
                                    uint64_t w,
                                    uint64_t k,
                                    uint64_t b,
                                    uint64_t m,
                                    double *lower,
                                    double *upper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAMLAB_H */
