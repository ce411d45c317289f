#ifndef SYSTOLIC3D_H
#define SYSTOLIC3D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible function.
 */
typedef enum {
  S3D_STATUS_OK = 0,
  S3D_STATUS_NULL_POINTER = 1,
  S3D_STATUS_INVALID_SHAPE = 2,
  S3D_STATUS_UNSUPPORTED_CLOCK = 3,
  S3D_STATUS_INVALID_MEMORY = 4,
  S3D_STATUS_INVALID_PLAN = 5,
  S3D_STATUS_PROBLEM_MISMATCH = 6,
  S3D_STATUS_INTERNAL = 7,
  S3D_STATUS_PANIC = 8,
} S3dStatus;

/**
 * Opaque design point.
 */
typedef struct S3dDesign S3dDesign;

/**
 * Architecture of the grid: `d0_i x d0_j` PEs per layer, `d0_k` DSPs deep,
 * dot units of `d_p` DSPs.
 */
typedef struct {
  size_t d0_i;
  size_t d0_j;
  size_t d0_k;
  size_t d_p;
} S3dArch;

/**
 * Blocking chosen for a design point.
 */
typedef struct {
  size_t d1_i;
  size_t d1_j;
  size_t b_ga;
  size_t b_gb;
  size_t r_a;
  size_t r_b;
} S3dPlan;

/**
 * Closed-form figures for one design point and problem.
 */
typedef struct {
  size_t n_dsp;
  size_t n_pe;
  double t_peak_gflops;
  double c_percent;
  double t_pred_gflops;
  double stall;
  uint64_t l_body;
  uint64_t l_tot;
} S3dEstimate;

/**
 * Counters of a blocked simulation.
 */
typedef struct {
  uint64_t it_read_init;
  uint64_t it_steady;
  uint64_t it_tail;
  uint64_t it_write;
  uint64_t it_comp;
  uint64_t it_tot;
  double measured_c;
  uint64_t elements_read_a;
  uint64_t elements_read_b;
  uint64_t elements_written_c;
  /**
   * 1 when the product matched the reference and traffic identities held.
   */
  uint8_t verified;
  /**
   * Lowercase hex SHA-256 of the product, NUL terminated.
   */
  char result_sha256[65];
} S3dSimStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *s3d_version(void);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *s3d_last_error(void);

/**
 * Number of DSP blocks used by `arch`.
 */
size_t s3d_dsp_count(S3dArch arch);

/**
 * Creates a design point with the default blocking at `fmax_mhz`.
 *
 * # Safety
 * `out` must be null or point to writable storage for one pointer.
 */
S3dStatus s3d_design_new(S3dArch arch, double fmax_mhz, S3dDesign **out);

/**
 * Creates a design point with first-level blocks of `d1_i x d1_j`.
 *
 * # Safety
 * `out` must be null or point to writable storage for one pointer.
 */
S3dStatus s3d_design_new_with_blocking(S3dArch arch,
                                       double fmax_mhz,
                                       size_t d1_i,
                                       size_t d1_j,
                                       S3dDesign **out);

/**
 * Releases a design. Null is ignored.
 *
 * # Safety
 * `design` must be null or a handle from this library not yet freed.
 */
void s3d_design_free(S3dDesign *design);

/**
 * Copies the blocking of `design` into `out`.
 *
 * # Safety
 * `design` must be a live handle; `out` must be null or writable.
 */
S3dStatus s3d_design_plan(const S3dDesign *design, S3dPlan *out);

/**
 * Closed-form estimate for a `d2_i x d2_k` by `d2_k x d2_j` product.
 *
 * # Safety
 * `design` must be a live handle; `out` must be null or writable.
 */
S3dStatus s3d_design_estimate(const S3dDesign *design,
                              size_t d2_i,
                              size_t d2_j,
                              size_t d2_k,
                              S3dEstimate *out);

/**
 * Runs the blocked schedule on seeded small-integer operands.
 *
 * # Safety
 * `design` must be a live handle; `out` must be null or writable.
 */
S3dStatus s3d_design_simulate_blocked(const S3dDesign *design,
                                      size_t d2_i,
                                      size_t d2_j,
                                      size_t d2_k,
                                      uint64_t seed,
                                      S3dSimStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYSTOLIC3D_H */
