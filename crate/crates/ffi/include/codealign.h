#ifndef CODEALIGN_H
#define CODEALIGN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CaStatus {
  CA_STATUS_OK = 0,
  CA_STATUS_NULL_ARGUMENT = 1,
  CA_STATUS_INVALID_UTF8 = 2,
  CA_STATUS_INVALID_ARGUMENT = 3,
  CA_STATUS_IO = 4,
  CA_STATUS_CONFIG = 5,
  CA_STATUS_LOCKED = 6,
  CA_STATUS_STALE_UPSTREAM = 7,
  CA_STATUS_RESUME_MISMATCH = 8,
  CA_STATUS_STAGE = 9,
  CA_STATUS_PARSE = 10,
  CA_STATUS_PANIC = 99,
} CaStatus;

/**
 * Opaque pipeline handle.
 */
typedef struct CaPipeline CaPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version; static, never freed.
 */
const char *codealign_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread.
 */
const char *codealign_last_error(void);

/**
 * Releases a string returned through an `out` parameter. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void codealign_string_free(char *s);

/**
 * Extracts candidate seed functions from one Python document as a JSON array.
 *
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out` must be writable.
 */
enum CaStatus codealign_extract_functions(const char *doc_id, const char *source, char **out);

/**
 * Splits a raw model sample into `{"response_text", "response_code",
 * "tests_code"}`. Fails with `Parse` and a reason such as `no-tests`.
 *
 * # Safety
 * `raw` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CaStatus codealign_parse_response(const char *raw, char **out);

/**
 * Near-duplicate groups over a JSON array of strings, as a JSON array of
 * index arrays.
 *
 * # Safety
 * `texts_json` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CaStatus codealign_dedup_groups(const char *texts_json,
                                     double threshold,
                                     uint64_t seed,
                                     char **out);

/**
 * Opens a run directory from a TOML config file.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CaStatus codealign_pipeline_open(const char *config_path,
                                      bool resume,
                                      struct CaPipeline **out);

/**
 * Runs every stage; the run summary is written to `out` as JSON.
 *
 * # Safety
 * `handle` must come from [`codealign_pipeline_open`]; `out` must be writable.
 */
enum CaStatus codealign_pipeline_run(struct CaPipeline *handle, char **out);

/**
 * Runs one stage by name (`curate`, `concepts`, `instructions`, `responses`,
 * `validate`, `select`).
 *
 * # Safety
 * `handle` must come from [`codealign_pipeline_open`]; `stage` must be a
 * valid NUL-terminated string; `out` must be writable.
 */
enum CaStatus codealign_pipeline_run_stage(struct CaPipeline *handle,
                                           const char *stage,
                                           char **out);

/**
 * Releases a pipeline handle and its run lock. NULL is ignored.
 *
 * # Safety
 * `handle` must come from [`codealign_pipeline_open`] and not have been freed.
 */
void codealign_pipeline_free(struct CaPipeline *handle);

/**
 * Statistics of a finished run directory as JSON.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CaStatus codealign_stats(const char *dir, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CODEALIGN_H */
