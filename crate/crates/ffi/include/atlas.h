#ifndef ATLAS_H
#define ATLAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AtlasStatus {
  ATLAS_STATUS_OK = 0,
  ATLAS_STATUS_NULL_ARGUMENT = 1,
  ATLAS_STATUS_INVALID_UTF8 = 2,
  ATLAS_STATUS_INVALID_CONFIG = 3,
  ATLAS_STATUS_MALFORMED_TRACE = 4,
  ATLAS_STATUS_INTERNAL = 5,
} AtlasStatus;

/**
 * A validated simulation configuration.
 */
typedef struct AtlasConfig AtlasConfig;

/**
 * A complete run trace.
 */
typedef struct AtlasTrace AtlasTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses and validates a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum AtlasStatus atlas_config_from_json(const char *json, struct AtlasConfig **out);

/**
 * Overrides the seed of a configuration.
 *
 * # Safety
 * `config` must come from [`atlas_config_from_json`].
 */
enum AtlasStatus atlas_config_set_seed(struct AtlasConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must come from [`atlas_config_from_json`] or be null.
 */
void atlas_config_free(struct AtlasConfig *config);

/**
 * Simulates the configuration to completion.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum AtlasStatus atlas_run(const struct AtlasConfig *config, struct AtlasTrace **out);

/**
 * Encodes a trace as JSON lines.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum AtlasStatus atlas_trace_to_jsonl(const struct AtlasTrace *trace, char **out);

/**
 * Parses a JSON-lines trace.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum AtlasStatus atlas_trace_from_jsonl(const char *text, struct AtlasTrace **out);

/**
 * Runs every checker. Writes the JSON report to `report` and whether all
 * checks passed to `all_passed`; either may be null if unwanted.
 *
 * # Safety
 * `trace` must be a live handle; non-null out-parameters must be writable.
 */
enum AtlasStatus atlas_trace_check(const struct AtlasTrace *trace, char **report, bool *all_passed);

/**
 * # Safety
 * `trace` must come from this library or be null.
 */
void atlas_trace_free(struct AtlasTrace *trace);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void atlas_string_free(char *s);

/**
 * The smallest ballot owned by process `proc` that exceeds `current`.
 */
uint64_t atlas_next_ballot(uint32_t proc, uint64_t current, uint32_t n);

/**
 * The message of the last failed call on this thread, or an empty string.
 * Valid until the next call into this library on the same thread.
 */
const char *atlas_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATLAS_H */
