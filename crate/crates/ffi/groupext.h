#ifndef GROUPEXT_H
#define GROUPEXT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define GX_OK 0

#define GX_ERR_NULL 1

#define GX_ERR_UTF8 2

#define GX_ERR_CONFIG 3

#define GX_ERR_INPUT 4

#define GX_ERR_STRUCTURAL 5

#define GX_ERR_UNSUPPORTED 6

#define GX_ERR_RESOURCE 7

#define GX_ERR_INSUFFICIENT_DATA 8

#define GX_ERR_DOMAIN 9

#define GX_ERR_BUFFER 10

#define GX_ERR_UNKNOWN_COMMAND 11

#define GX_ERR_PANIC 12

/**
 * Opaque handle to a parsed system configuration.
 */
typedef struct GxSystem GxSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty when none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *gx_last_error(void);

/**
 * Parses configuration JSON into a new system handle written to `out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t gx_system_new(const char *json, struct GxSystem **out);

/**
 * Releases a handle from `gx_system_new`. Null is ignored.
 *
 * # Safety
 * `sys` must come from `gx_system_new` and not be used afterwards.
 */
void gx_system_free(struct GxSystem *sys);

/**
 * Writes log Z^n for n = 0..=n_max into `log_z`, which must hold at least
 * n_max + 1 values. Levels with Z^n = 0 are −∞.
 *
 * # Safety
 * `sys` must be a live handle and `log_z` must point to `len` doubles.
 */
int32_t gx_zcount(const struct GxSystem *sys, uintptr_t n_max, double *log_z, uintptr_t len);

/**
 * Estimates the spectral radius, the polynomial correction exponent and the
 * standard error of the radius from Z^n up to `n_max`. Null outputs are skipped.
 *
 * # Safety
 * `sys` must be a live handle; non-null outputs must be valid.
 */
int32_t gx_spectrum(const struct GxSystem *sys,
                    uintptr_t n_max,
                    double *rho,
                    double *beta,
                    double *stderr);

/**
 * Runs `command` ("spectrum", "classify", "dimension" or "validate") with the
 * configured numerics and writes the JSON document to `out`. A failed
 * validation still returns `GX_OK`; its document has `"passed": false`.
 *
 * # Safety
 * `sys` must be a live handle, `command` a NUL-terminated string and `out` a
 * valid pointer.
 */
int32_t gx_run_json(const struct GxSystem *sys, const char *command, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void gx_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPEXT_H */
