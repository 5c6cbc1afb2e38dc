#ifndef STREAMSEAL_H
#define STREAMSEAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsErrorCode {
  SS_ERROR_CODE_OK = 0,
  SS_ERROR_CODE_NULL_ARGUMENT = 1,
  SS_ERROR_CODE_INVALID_UTF8 = 2,
  SS_ERROR_CODE_CANONICAL = 3,
  SS_ERROR_CODE_WINDOW = 4,
  SS_ERROR_CODE_CONFIG = 5,
  SS_ERROR_CODE_PANIC = 99,
} SsErrorCode;

/**
 * Opaque auditor handle.
 */
typedef struct SsAuditor SsAuditor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Copy of the calling thread's last error message, or NULL.
 */
char *ss_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void ss_string_free(char *s);

/**
 * Canonical form of one JSON record under the default field rules.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SsErrorCode ss_canonicalize(const char *json, char **out);

/**
 * Sorted-leaf Merkle root over `count` byte strings, written as 64 hex
 * characters plus NUL into `out_hex` (at least 65 bytes). Zero items give
 * the root of an empty window.
 *
 * # Safety
 * `items` and `lens` must each point to `count` entries (they may be NULL
 * when `count` is 0); each item must be readable for its length.
 */
enum SsErrorCode ss_merkle_root(const uint8_t *const *items,
                                const size_t *lens,
                                size_t count,
                                char *out_hex);

/**
 * Id of the tumbling window of `duration_seconds` holding `epoch_seconds`.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum SsErrorCode ss_window_id(const char *source,
                              int64_t epoch_seconds,
                              uint32_t duration_seconds,
                              char **out);

/**
 * Opens an auditor over the deployment described by a config file. The
 * configured ledger is used when it can be opened, otherwise the mirror
 * log alone; the results file is attached when present.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must be writable.
 */
enum SsErrorCode ss_auditor_open(const char *config_path, bool strict, struct SsAuditor **out);

/**
 * Verifies one window. The verdict is written as JSON to `out_json`;
 * `out_verified` (optional) receives the overall result. A Failed verdict
 * is still `SS_ERROR_CODE_OK`: the call succeeded.
 *
 * # Safety
 * `auditor` must come from `ss_auditor_open`; strings must be
 * NUL-terminated; `out_json` must be writable.
 */
enum SsErrorCode ss_auditor_verify_window(const struct SsAuditor *auditor,
                                          const char *window_id,
                                          const char *stream,
                                          char **out_json,
                                          bool *out_verified);

/**
 * # Safety
 * `auditor` must be NULL or a handle from `ss_auditor_open`, freed once.
 */
void ss_auditor_free(struct SsAuditor *auditor);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STREAMSEAL_H */
