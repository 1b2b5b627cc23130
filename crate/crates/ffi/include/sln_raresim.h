#ifndef SLN_RARESIM_H
#define SLN_RARESIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SLNR_OK 0

#define SLNR_ERR_NULL_POINTER 1

#define SLNR_ERR_INVALID_ARGUMENT 2

#define SLNR_ERR_MODEL 3

#define SLNR_ERR_CONFIG 4

#define SLNR_ERR_NUMERICAL 5

#define SLNR_ERR_PANIC 6

#define SLNR_QUANTITY_CDF 0

#define SLNR_QUANTITY_PDF 1

#define SLNR_QUANTITY_RIGHT_TAIL 2

#define SLNR_ESTIMATOR_NEW 0

#define SLNR_ESTIMATOR_SIMPLE 1

#define SLNR_ESTIMATOR_CRUDE 2

#define SLNR_ESTIMATOR_VAR_BOOST 3

#define SLNR_ESTIMATOR_AK 4

#define SLNR_ESTIMATOR_ISVE 5

#define SLNR_ESTIMATOR_GT 6

#define SLNR_STREAM_PSEUDO 0

#define SLNR_STREAM_SOBOL 1

#define SLNR_FLAG_OPTIMIZER_FALLBACK 1

#define SLNR_FLAG_ALL_ZERO 2

#define SLNR_FLAG_NO_VARIANCE 4

#define SLNR_FLAG_EMPTY_STRATUM 8

/**
 * Opaque model handle.
 */
typedef struct SlnrModel SlnrModel;

/**
 * Options for `slnr_estimate`. Start from `slnr_estimate_options_default`.
 */
typedef struct SlnrEstimateOptions {
  uint32_t quantity;
  uint32_t estimator;
  uint32_t stream;
  uint64_t n;
  uint64_t shifts;
  uint64_t seed;
  /**
   * Variance-boost parameter; NaN selects the default `1 - 1/ln^2 gamma`.
   */
  double theta;
} SlnrEstimateOptions;

/**
 * Estimate returned by `slnr_estimate`. The estimate is
 * `sign * exp(log_mean)`; `estimate` is that value in double precision
 * (it underflows to 0 below about 1e-308, `log_mean` does not).
 */
typedef struct SlnrEstimate {
  double log_mean;
  double sign;
  double estimate;
  double log10_estimate;
  double re_percent;
  double wnrv;
  double wall_seconds;
  uint64_t n;
  /**
   * Bitwise OR of `SLNR_FLAG_*`.
   */
  uint32_t flags;
} SlnrEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *slnr_last_error_message(void);

/**
 * Builds a model from `nu` (length `d`) and a row-major `d*d` covariance.
 *
 * # Safety
 * `nu` must point to `d` doubles, `sigma` to `d*d` doubles, and `out` to
 * writable storage for one pointer.
 */
int slnr_model_new(size_t d, const double *nu, const double *sigma, struct SlnrModel **out);

/**
 * Builds a model from a JSON document in any of the model-file shapes.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
int slnr_model_from_json(const char *json, struct SlnrModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from a `slnr_model_*` constructor and not be used again.
 */
void slnr_model_free(struct SlnrModel *model);

/**
 * Dimension of the model, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t slnr_model_dim(const struct SlnrModel *model);

/**
 * Defaults: new estimator, CDF, pseudorandom stream, n = 1e6, 100 shifts,
 * seed 1, default theta.
 */
struct SlnrEstimateOptions slnr_estimate_options_default(void);

/**
 * Runs one estimator. `opts` may be NULL for the defaults.
 *
 * # Safety
 * `model` must be a live handle, `opts` NULL or readable, `out` writable.
 */
int slnr_estimate(const struct SlnrModel *model,
                  double gamma,
                  const struct SlnrEstimateOptions *opts,
                  struct SlnrEstimate *out);

/**
 * Natural log of the first-order right-tail approximation
 * `sum_k P(X_k > gamma)`.
 *
 * # Safety
 * `model` must be a live handle and `out_log` writable.
 */
int slnr_ell_as(const struct SlnrModel *model, double gamma, double *out_log);

/**
 * Draws `n` exact samples of X given `X_1 + ... + X_d <= gamma` into the
 * row-major `n*d` buffer `out_x`. `out_acceptance_rate` may be NULL.
 *
 * # Safety
 * `model` must be a live handle and `out_x` must hold `n*d` doubles.
 */
int slnr_sample_conditional(const struct SlnrModel *model,
                            double gamma,
                            size_t n,
                            uint64_t seed,
                            double *out_x,
                            double *out_acceptance_rate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLN_RARESIM_H */
