#ifndef LQRLAB_H
#define LQRLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LqrStatus {
  LQR_STATUS_OK = 0,
  LQR_STATUS_NULL_POINTER = 1,
  LQR_STATUS_INVALID_ARGUMENT = 2,
  LQR_STATUS_DIMENSION = 3,
  LQR_STATUS_NOT_STABILIZING = 4,
  LQR_STATUS_NUMERICAL = 5,
  LQR_STATUS_PANIC = 6,
} LqrStatus;

/**
 * Opaque plant handle.
 */
typedef struct LqrPlant LqrPlant;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a plant from row-major buffers; `omega` may be null for `Ω = I`.
 *
 * # Safety
 * Buffers must hold the sizes listed in the module docs; `out` must be writable.
 */
enum LqrStatus lqr_plant_new(size_t n,
                             size_t m,
                             const double *a,
                             const double *b,
                             const double *q,
                             const double *r,
                             const double *omega,
                             struct LqrPlant **out);

/**
 * Mass-spring-damper chain with `masses` unit masses and `Q = R = Ω = I`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LqrStatus lqr_plant_mass_spring(size_t masses, struct LqrPlant **out);

/**
 * # Safety
 * `plant` must be null or a handle not yet freed.
 */
void lqr_plant_free(struct LqrPlant *plant);

/**
 * # Safety
 * `plant` must be a live handle; `n` and `m` writable.
 */
enum LqrStatus lqr_plant_dims(const struct LqrPlant *plant, size_t *n, size_t *m);

/**
 * `f(K) = trace(P_K Ω)`; fails with `NotStabilizing` outside the stabilizing set.
 *
 * # Safety
 * `k` holds `m·n` doubles; `out` is writable.
 */
enum LqrStatus lqr_cost(const struct LqrPlant *plant, const double *k, double *out);

/**
 * `∇f(K) = 2(RK − BᵀP)X` into an `m×n` buffer.
 *
 * # Safety
 * `k` and `out` hold `m·n` doubles.
 */
enum LqrStatus lqr_gradient(const struct LqrPlant *plant, const double *k, double *out);

/**
 * Stabilizing Riccati solution by Kleinman iteration. Any output may be null.
 *
 * # Safety
 * `p_star` holds `n·n` doubles, `k_star` holds `m·n`, `f_star` one.
 */
enum LqrStatus lqr_riccati(const struct LqrPlant *plant,
                           double *p_star,
                           double *k_star,
                           double *f_star);

/**
 * Message of the last failure on this thread, or null. Valid until the next failing call.
 */
const char *lqr_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LQRLAB_H */
