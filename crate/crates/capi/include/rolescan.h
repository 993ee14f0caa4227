#ifndef ROLESCAN_H
#define ROLESCAN_H

/* Generated by cbindgen from rolescan-capi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible API call.
typedef enum RsStatus {
  // The call succeeded.
  RS_STATUS_OK = 0,
  // A required pointer argument was NULL.
  RS_STATUS_NULL_ARGUMENT = 1,
  // An input string was not valid UTF-8.
  RS_STATUS_INVALID_UTF8 = 2,
  // The factory or policy JSON failed to parse.
  RS_STATUS_PARSE_ERROR = 3,
  // The factory parsed but has blocking structural violations.
  RS_STATUS_INVALID_FACTORY = 4,
  // The analysis itself failed.
  RS_STATUS_ANALYSIS_ERROR = 5,
  // An internal invariant broke; file a bug with the last error text.
  RS_STATUS_INTERNAL = 6,
} RsStatus;

// Opaque handle to one completed analysis.
typedef struct RsAnalysis RsAnalysis;

// Analysis tuning knobs. Zero-initialize and call
// `rs_options_default`, then override individual fields.
typedef struct RsOptions {
  // Largest condition (in distinct atoms) enumerated exactly.
  uint32_t max_atoms;
  // Cap on recorded call paths per candidate.
  uint32_t max_paths;
  // Cap on memoized traversal states per candidate.
  uint32_t max_summary_states;
  // Worker threads; 0 means one per available CPU.
  uint32_t jobs;
} RsOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL when the
// last call succeeded. The pointer is valid until this thread's next
// API call.
const char *rs_last_error(void);

// The library version as a static NUL-terminated string.
const char *rs_version(void);

// Fills `options` with the default limits.
enum RsStatus rs_options_default(struct RsOptions *options);

// Analyzes `factory_json` against `policy_json` and stores a new handle
// in `*out`. `options` may be NULL for defaults. On success `*out` is
// non-NULL and must be released with `rs_analysis_free`; on failure
// `*out` is NULL and `rs_last_error` explains why.
enum RsStatus rs_analyze(const char *factory_json,
                         const char *policy_json,
                         const struct RsOptions *options,
                         struct RsAnalysis **out);

// The findings report as NUL-terminated JSON, borrowed from the handle.
// Returns NULL when `analysis` is NULL.
const char *rs_analysis_report_json(const struct RsAnalysis *analysis);

// Total findings in the report; 0 when `analysis` is NULL.
uint64_t rs_analysis_finding_count(const struct RsAnalysis *analysis);

// Non-blocking validation warnings the analysis carried along; 0 when
// `analysis` is NULL.
uint64_t rs_analysis_warning_count(const struct RsAnalysis *analysis);

// Releases a handle. NULL is a no-op. The handle and every pointer
// borrowed from it are invalid afterwards.
void rs_analysis_free(struct RsAnalysis *analysis);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROLESCAN_H */
