#ifndef CBS_RV_H
#define CBS_RV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call. The values match the exit codes of the `cbs-rv` tool
// where they overlap.
typedef enum CbsStatus {
  CBS_STATUS_OK = 0,
  // Null pointer, invalid UTF-8 or out-of-range option.
  CBS_STATUS_INVALID_ARGUMENT = 1,
  // The model, monitor or trace is invalid, or the run failed.
  CBS_STATUS_INVALID = 2,
  // The systems are not weakly bisimilar, or the check was inconclusive.
  CBS_STATUS_NOT_EQUIVALENT = 3,
  // Internal error; the library state is unaffected.
  CBS_STATUS_PANIC = 4,
} CbsStatus;

typedef enum CbsRgtVariant {
  CBS_RGT_VARIANT_DEFAULT = 0,
  CBS_RGT_VARIANT_UNGUARDED_NEW = 1,
  CBS_RGT_VARIANT_UNGUARDED_UPD = 2,
  CBS_RGT_VARIANT_UNGUARDED_BOTH = 3,
} CbsRgtVariant;

typedef enum CbsMode {
  CBS_MODE_GLOBAL = 0,
  CBS_MODE_PARTIAL = 1,
  CBS_MODE_MONITORED = 2,
} CbsMode;

typedef enum CbsStage {
  CBS_STAGE_PARTIAL = 0,
  CBS_STAGE_TRANSFORMED = 1,
} CbsStage;

// Opaque system handle.
typedef struct CbsSystem CbsSystem;

// Options of `cbs_run`; start from `cbs_run_options_default`.
typedef struct CbsRunOptions {
  enum CbsMode mode;
  uint64_t seed;
  // Number of interactions to execute.
  uint64_t steps;
  // Complete pending computations at the end.
  bool drain;
  // Real worker threads instead of seeded virtual time.
  bool real_time;
  uint32_t threads;
  // Busy time of each computation in real-time mode.
  uint64_t busy_delay_us;
  enum CbsRgtVariant rgt_variant;
} CbsRunOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *cbs_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` is null or a string returned by this library, not yet freed.
void cbs_string_free(char *s);

// Parses and validates a model in the text or JSON format.
//
// # Safety
// `text` is a NUL-terminated string; `out` is valid for writes.
enum CbsStatus cbs_system_parse(const char *text, struct CbsSystem **out);

// A bundled model: `"task"` or `"readers-writers"`.
//
// # Safety
// `name` is a NUL-terminated string; `out` is valid for writes.
enum CbsStatus cbs_system_builtin(const char *name, struct CbsSystem **out);

// Releases a system handle. Null is ignored.
//
// # Safety
// `sys` is null or a handle from this library, not yet freed.
void cbs_system_free(struct CbsSystem *sys);

// Renders a system in the text format, or as JSON when `json` is set.
//
// # Safety
// `sys` is a live handle; `out` is valid for writes.
enum CbsStatus cbs_system_render(const struct CbsSystem *sys, bool json, char **out);

// Builds the transformed system. With a monitor (spec text, may be null)
// only the variables it reads are reconstructed and the monitor is
// attached.
//
// # Safety
// `sys` is a live handle; `monitor` is null or a NUL-terminated string;
// `out` is valid for writes.
enum CbsStatus cbs_system_transform(const struct CbsSystem *sys,
                                    const char *monitor,
                                    enum CbsRgtVariant variant,
                                    struct CbsSystem **out);

// Default run options: partial mode, seed 0, 100 steps, drained, virtual
// time, one thread.
struct CbsRunOptions cbs_run_options_default(void);

// Executes a system. The report is written as JSON to `report_json` and
// the trace in the line format to `trace`; either may be null.
// `monitor` (spec text) is used in monitored mode and may be null when
// the model carries its own monitor.
//
// # Safety
// `sys` is a live handle; `opts` points to valid options; `monitor` is
// null or a NUL-terminated string; the outputs are null or valid for
// writes.
enum CbsStatus cbs_run(const struct CbsSystem *sys,
                       const struct CbsRunOptions *opts,
                       const char *monitor,
                       char **report_json,
                       char **trace);

// Reconstructs the global witness of a trace (text or JSON trace format).
// With a system handle the trace is first checked to be a run of it.
//
// # Safety
// `trace` is a NUL-terminated string; `sys` is null or a live handle;
// `out` is valid for writes.
enum CbsStatus cbs_witness(const char *trace, const struct CbsSystem *sys, char **out);

// Checks weak bisimilarity at `stage`, exploring at most `bound` states
// per system. The JSON report (state counts, counterexample) goes to
// `report_json`, which may be null. Returns `NotEquivalent` when the
// systems differ or the bound is hit.
//
// # Safety
// `sys` is a live handle; `report_json` is null or valid for writes.
enum CbsStatus cbs_verify_equivalence(const struct CbsSystem *sys,
                                      enum CbsStage stage,
                                      uint64_t bound,
                                      enum CbsRgtVariant variant,
                                      char **report_json);

// Library version, static storage.
const char *cbs_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBS_RV_H */
