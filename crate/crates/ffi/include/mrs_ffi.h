#ifndef MRS_FFI_H
#define MRS_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of every call.
 */
typedef enum MrsStatus {
  MRS_STATUS_OK = 0,
  MRS_STATUS_NULL_POINTER = 1,
  MRS_STATUS_INVALID_ARGUMENT = 2,
  MRS_STATUS_PARSE = 3,
  MRS_STATUS_FIT = 4,
  MRS_STATUS_CALIBRATION = 5,
  MRS_STATUS_INTERNAL = 6,
  MRS_STATUS_IO = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  MRS_STATUS_PANIC = 8,
} MrsStatus;

typedef enum MrsRegime {
  MRS_REGIME_BASE = 0,
  MRS_REGIME_SPIKE = 1,
  MRS_REGIME_DROP = 2,
} MrsRegime;

typedef enum MrsSettlement {
  MRS_SETTLEMENT_AT_MATURITY = 0,
  MRS_SETTLEMENT_INSTANT = 1,
} MrsSettlement;

/**
 * Opaque pricing state.
 */
typedef struct MrsContext MrsContext;

/**
 * Model parameters with a constant transition matrix, rows indexed
 * base, spike, drop.
 */
typedef struct MrsModel {
  double alpha;
  double beta;
  double sigma_base;
  double mu_spike;
  double sigma_spike;
  double shift_spike;
  double mu_drop;
  double sigma_drop;
  double shift_drop;
  double transition[3][3];
} MrsModel;

/**
 * Regime information at the valuation date. `lag` is 0 in the base
 * regime; otherwise the last base day lies `lag` days back and
 * `last_base_value` is the base value observed then.
 */
typedef struct MrsState {
  enum MrsRegime regime;
  double last_base_value;
  uint32_t lag;
} MrsState;

/**
 * Delivery window in day offsets from the valuation date. Daily windows
 * need integral bounds and cover days `t1..=t2`; continuous windows cover
 * the interval `[t1, t2]`.
 */
typedef struct MrsWindow {
  double t1;
  double t2;
  enum MrsSettlement settlement;
  bool continuous;
} MrsWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null when none has
 * failed. The pointer stays valid until the next failing call on the same
 * thread.
 */
const char *mrs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mrs_version(void);

/**
 * Build a context with a flat seasonal component and affine market price
 * of risk `slope * t + level`. `rate` is the continuously compounded rate
 * per day.
 *
 * # Safety
 * `model` and `state` must point to valid structs and `out` to writable
 * storage for one pointer.
 */
enum MrsStatus mrs_context_new(const struct MrsModel *model,
                               const struct MrsState *state,
                               double lambda_slope,
                               double lambda_level,
                               double rate,
                               struct MrsContext **out);

/**
 * Build a context from its JSON form, as produced by
 * [`mrs_context_to_json`]. This is the only way to supply a fitted
 * seasonal component or a periodic transition matrix.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable storage for
 * one pointer.
 */
enum MrsStatus mrs_context_from_json(const char *json, struct MrsContext **out);

/**
 * JSON form of a context. Release the string with [`mrs_string_free`].
 *
 * # Safety
 * `ctx` must come from this library and `out` be writable.
 */
enum MrsStatus mrs_context_to_json(const struct MrsContext *ctx, char **out);

/**
 * # Safety
 * `ctx` must be null or a pointer returned by a context constructor that
 * has not been freed yet.
 */
void mrs_context_free(struct MrsContext *ctx);

/**
 * # Safety
 * `s` must be null or a string returned by this library that has not been
 * freed yet.
 */
void mrs_string_free(char *s);

/**
 * Expected spot price at day offset `t`, under the pricing measure when
 * `risk_neutral` is set and the actual measure otherwise.
 *
 * # Safety
 * `ctx` must be a live context and `out` writable.
 */
enum MrsStatus mrs_expected_spot(const struct MrsContext *ctx,
                                 double t,
                                 bool risk_neutral,
                                 double *out);

/**
 * Forward price today for delivery at day offset `delivery`.
 *
 * # Safety
 * `ctx` must be a live context and `out` writable.
 */
enum MrsStatus mrs_forward(const struct MrsContext *ctx, double delivery, double *out);

/**
 * Forward price today for a delivery window.
 *
 * # Safety
 * `ctx` and `window` must be valid and `out` writable.
 */
enum MrsStatus mrs_forward_window(const struct MrsContext *ctx,
                                  const struct MrsWindow *window,
                                  double *out);

/**
 * European call on the spot price with maturity `maturity` days ahead.
 *
 * # Safety
 * `ctx` must be a live context and `out` writable.
 */
enum MrsStatus mrs_spot_option(const struct MrsContext *ctx,
                               double strike,
                               double maturity,
                               double *out);

/**
 * European call expiring at day offset `expiry` on the forward for
 * `window`.
 *
 * # Safety
 * `ctx` and `window` must be valid and `out` writable.
 */
enum MrsStatus mrs_forward_option(const struct MrsContext *ctx,
                                  double strike,
                                  double expiry,
                                  const struct MrsWindow *window,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRS_FFI_H */
