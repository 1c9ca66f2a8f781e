/* C interface for the memgrove memory engine. */

#ifndef MEMGROVE_H
#define MEMGROVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum MgStatus {
  MG_STATUS_OK = 0,
  // Bad argument or configuration.
  MG_STATUS_INVALID_ARGUMENT = 1,
  // Missing notes, malformed snapshots or datasets, serialization issues.
  MG_STATUS_DATA_ERROR = 2,
  // The model backend failed after exhausting retries.
  MG_STATUS_BACKEND_ERROR = 3,
  // A required pointer argument was null.
  MG_STATUS_NULL_POINTER = 4,
  // The engine panicked; the handle is still valid but the operation
  // may have been lost.
  MG_STATUS_PANIC = 5,
} MgStatus;

// Opaque engine handle.
typedef struct MgEngine MgEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Create an engine. `config_json` is an engine config document (null for
// the defaults); `stub_table_json` is a scripted decision table (null for
// the built-in fallback table). On success `*out_engine` owns the handle.
//
// # Safety
// String arguments must be null or NUL-terminated; `out_engine` must be a
// valid pointer.
enum MgStatus mg_engine_new(const char *config_json,
                            const char *stub_table_json,
                            struct MgEngine **out_engine);

// Restore an engine from a snapshot file written by `mg_engine_snapshot`.
//
// # Safety
// Same contracts as `mg_engine_new`; `path` must be NUL-terminated.
enum MgStatus mg_engine_restore(const char *path,
                                const char *stub_table_json,
                                struct MgEngine **out_engine);

// Release an engine handle. Null is a no-op.
//
// # Safety
// `engine` must be null or a pointer produced by this library that has not
// already been freed.
void mg_engine_free(struct MgEngine *engine);

// Ingest one memory. When `out_outcome_json` is non-null it receives the
// routing/evolution outcome as JSON.
//
// # Safety
// `engine` must be a live handle with no concurrent use; strings must be
// NUL-terminated.
enum MgStatus mg_engine_ingest(struct MgEngine *engine,
                               const char *content,
                               const char *timestamp,
                               char **out_outcome_json);

// Retrieve for a query. `mode` is 0 for two-stage, 1 for a global scan.
// `*out_result_json` receives the full retrieval result as JSON.
//
// # Safety
// Same contracts as `mg_engine_ingest`.
enum MgStatus mg_engine_retrieve(struct MgEngine *engine,
                                 const char *query,
                                 int mode,
                                 char **out_result_json);

// Cluster statistics as JSON.
//
// # Safety
// Same contracts as `mg_engine_ingest`.
enum MgStatus mg_engine_stats_json(struct MgEngine *engine, char **out_stats_json);

// Write the engine's full state to `path` as a snapshot document.
//
// # Safety
// Same contracts as `mg_engine_ingest`.
enum MgStatus mg_engine_snapshot(struct MgEngine *engine, const char *path);

// Release a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must be null or a string produced by this library that has not
// already been freed.
void mg_string_free(char *s);

// The message for the most recent error on this thread, as a fresh string
// the caller must free, or null when no error has occurred yet.
char *mg_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMGROVE_H */
