#ifndef TGEOM_H
#define TGEOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TgStatus {
  TG_STATUS_OK = 0,
  TG_STATUS_NULL_POINTER = 1,
  TG_STATUS_INVALID_INPUT = 2,
  TG_STATUS_SOLVER_FAILURE = 3,
  TG_STATUS_BUFFER_TOO_SMALL = 4,
  TG_STATUS_PANIC = 5,
} TgStatus;

typedef enum TgKind {
  TG_KIND_NEUTRAL = 0,
  TG_KIND_FUTURE = 1,
  TG_KIND_PAST = 2,
} TgKind;

/*
 Opaque world handle.
 */
typedef struct TgWorld TgWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Builds a world from a NUL-terminated JSON spec. On success `*out` owns a new handle.

 # Safety
 `json` must be a valid C string and `out` a valid pointer.
 */
enum TgStatus tg_world_from_json(const char *json, struct TgWorld **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `w` must come from `tg_world_from_json` and not be used afterwards.
 */
void tg_world_free(struct TgWorld *w);

/*
 Chart dimension, 0 for a null handle.

 # Safety
 `w` must be null or a live handle.
 */
size_t tg_world_dim(const struct TgWorld *w);

/*
 Σ(x, x′).

 # Safety
 `x` and `xp` must point to `len` doubles; `out` to one.
 */
enum TgStatus tg_sigma(const struct TgWorld *w,
                       const double *x,
                       const double *xp,
                       size_t len,
                       double *out);

/*
 Scalar Σ-product (P₀P₁.Q₀Q₁).

 # Safety
 The four point pointers must each reference `len` doubles; `out` one.
 */
enum TgStatus tg_vector_product(const struct TgWorld *w,
                                const double *p0,
                                const double *p1,
                                const double *q0,
                                const double *q1,
                                size_t len,
                                double *out);

/*
 Radii of the axisymmetric first-order tube through 0 and `y` at parameter `tau`.

 Writes up to `cap` radii in ascending order and their count to `*n_out`.
 Returns `BufferTooSmall` (with `*n_out` set) if `cap` is insufficient.

 # Safety
 `y` must reference `len` doubles, `radii` `cap` doubles, `n_out` one size_t.
 */
enum TgStatus tg_tube_radii(const struct TgWorld *w,
                            enum TgKind kind,
                            const double *y,
                            size_t len,
                            double tau,
                            double *radii,
                            size_t cap,
                            size_t *n_out);

/*
 Coincidence limits at `x`: a_i into `a` (len doubles) and g_ik into `g` (len² doubles, row-major).

 # Safety
 Buffers must have the stated sizes.
 */
enum TgStatus tg_coincidence(const struct TgWorld *w,
                             const double *x,
                             size_t len,
                             double *a,
                             double *g);

/*
 Implicit gradient line from `xa` (τ = 0) to `xb` (τ = 1) on `steps` equal intervals.

 Writes (steps + 1)·len coordinates row-major into `out` and the number of
 samples actually resolved into `*n_out` (rough worlds may drop samples near τ = 0).

 # Safety
 `xa`, `xb` reference `len` doubles; `out` holds (steps + 1)·len doubles.
 */
enum TgStatus tg_gradient_line(const struct TgWorld *w,
                               enum TgKind kind,
                               const double *xa,
                               const double *xb,
                               size_t len,
                               size_t steps,
                               double *out,
                               size_t *n_out);

/*
 Copies the last error message of this thread into `buf` (NUL-terminated, truncated to `cap`).
 Returns the full message length in bytes, excluding the terminator.

 # Safety
 `buf` must be null or reference `cap` bytes.
 */
size_t tg_last_error_message(char *buf, size_t cap);

/*
 Library version as a static C string.
 */
const char *tg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TGEOM_H */
