#ifndef RCL_H
#define RCL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RclStatus {
  RCL_STATUS_OK = 0,
  RCL_STATUS_NULL_POINTER = 1,
  RCL_STATUS_INVALID_UTF8 = 2,
  RCL_STATUS_INVALID_JSON = 3,
  RCL_STATUS_INVALID_CONFIG = 4,
  RCL_STATUS_SIMULATION_FAILED = 5,
  RCL_STATUS_UNSUPPORTED = 6,
  RCL_STATUS_PANIC = 7,
} RclStatus;

// Opaque experiment configuration.
typedef struct RclConfig RclConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *rcl_version(void);

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into the library from this thread.
const char *rcl_last_error(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void rcl_string_free(char *s);

// Parses and validates an experiment configuration.
//
// # Safety
// `json` must be a nul-terminated string and `out` valid for one write.
enum RclStatus rcl_config_from_json(const char *json, struct RclConfig **out);

// Releases a configuration. NULL is ignored.
//
// # Safety
// `handle` must be null or a live pointer from `rcl_config_from_json`.
void rcl_config_free(struct RclConfig *handle);

// # Safety
// `handle` must be null or a live configuration handle.
enum RclStatus rcl_config_set_seed(struct RclConfig *handle, uint64_t seed);

// # Safety
// `handle` must be null or a live configuration handle.
enum RclStatus rcl_config_set_trials(struct RclConfig *handle, uint64_t trials);

// Replaces the deviation; NULL clears it.
//
// # Safety
// `handle` must be a live configuration handle and `json` null or a
// nul-terminated string.
enum RclStatus rcl_config_set_deviation(struct RclConfig *handle, const char *json);

// Serialises the configuration.
//
// # Safety
// `handle` must be a live configuration handle and `out` valid for one write.
enum RclStatus rcl_config_to_json(const struct RclConfig *handle, char **out);

// One run of `trial`; writes the run record as JSON.
//
// # Safety
// `handle` must be a live configuration handle and `out` valid for one write.
enum RclStatus rcl_run(const struct RclConfig *handle, uint64_t trial, char **out);

// # Safety
// `handle` must be a live configuration handle and `out` valid for one write.
enum RclStatus rcl_monte_carlo(const struct RclConfig *handle, char **out);

// Fairness report for `context_json`, or for trial 0's context when NULL.
//
// # Safety
// `handle` must be a live configuration handle, `context_json` null or a
// nul-terminated string, and `out` valid for one write.
enum RclStatus rcl_fairness(const struct RclConfig *handle, const char *context_json, char **out);

// # Safety
// `handle` must be a live configuration handle and `out` valid for one write.
enum RclStatus rcl_deviation_gain(const struct RclConfig *handle, char **out);

// Exact ex-post exhibit with the default utilities; writes `null` when
// `f` is zero.
//
// # Safety
// `out` must be valid for one write.
enum RclStatus rcl_expost_exhibit(size_t n, size_t f, uint64_t seed, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RCL_H */
