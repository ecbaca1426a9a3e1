#ifndef SAF_H
#define SAF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum saf_status {
  SAF_STATUS_OK = 0,
  SAF_STATUS_NULL_POINTER = 1,
  SAF_STATUS_INVALID_ARGUMENT = 2,
  SAF_STATUS_DIMENSION_MISMATCH = 3,
  SAF_STATUS_DOMAIN = 4,
  SAF_STATUS_IO = 5,
  SAF_STATUS_DATA = 6,
  SAF_STATUS_OPTIMIZER = 7,
  SAF_STATUS_PANIC = 8,
} saf_status;

/**
 * A spline activation network.
 */
typedef struct SafNet SafNet;

/**
 * A training criterion bound to a dataset.
 */
typedef struct SafObjective SafObjective;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *saf_last_error(void);

/**
 * Glorot-initialized network with perturbed tanh grids.
 *
 * # Safety
 * `out_net` must be a valid pointer to writable storage for one handle.
 */
enum saf_status saf_network_new(size_t inputs,
                                size_t hidden,
                                size_t outputs,
                                double delta_x,
                                size_t num_knots,
                                uint64_t seed,
                                struct SafNet **out_net);

/**
 * Replaces every grid of `net` with clean tanh samples.
 *
 * # Safety
 * `net` must be a live handle from [`saf_network_new`].
 */
enum saf_status saf_network_reset_tanh(struct SafNet *net);

/**
 * # Safety
 * `net` must be null or a live handle; it is invalid afterwards.
 */
void saf_network_free(struct SafNet *net);

/**
 * Length of the full parameter vector (weights, then ordinates).
 *
 * # Safety
 * `net` must be a live handle and `out_len` writable.
 */
enum saf_status saf_network_param_count(const struct SafNet *net, size_t *out_len);

/**
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum saf_status saf_network_get_params(const struct SafNet *net, double *buf, size_t len);

/**
 * # Safety
 * `params` must hold `len` doubles.
 */
enum saf_status saf_network_set_params(struct SafNet *net, const double *params, size_t len);

/**
 * Network outputs for `rows` samples: `x` is `rows x inputs`, `y` is `rows x outputs`.
 *
 * # Safety
 * `x` and `y` must hold the stated number of doubles.
 */
enum saf_status saf_network_forward(const struct SafNet *net,
                                    const double *x,
                                    size_t rows,
                                    double *y);

/**
 * Catmull-Rom spline through `num_knots` ordinates spaced `delta_x` apart
 * and centred on 0, evaluated at `s`. Either output pointer may be null.
 *
 * # Safety
 * `ordinates` must hold `num_knots` doubles.
 */
enum saf_status saf_spline_eval(const double *ordinates,
                                size_t num_knots,
                                double delta_x,
                                double s,
                                double *value,
                                double *derivative);

/**
 * Regularized squared-error criterion on `rows` samples. The damping
 * anchor is the clean tanh grid. With `trainable_grids == 0` the
 * ordinates of `net` are frozen and only the weights are parameters.
 *
 * # Safety
 * `x` holds `rows x inputs` and `y` `rows x outputs` doubles; `out_obj` is writable.
 */
enum saf_status saf_objective_new(const struct SafNet *net,
                                  int32_t trainable_grids,
                                  const double *x,
                                  const double *y,
                                  size_t rows,
                                  double lambda_w,
                                  double lambda_q,
                                  struct SafObjective **out_obj);

/**
 * # Safety
 * `obj` must be null or a live handle; it is invalid afterwards.
 */
void saf_objective_free(struct SafObjective *obj);

/**
 * Number of trainable parameters of the objective.
 *
 * # Safety
 * `obj` must be a live handle and `out_len` writable.
 */
enum saf_status saf_objective_param_count(const struct SafObjective *obj, size_t *out_len);

/**
 * Writes the starting parameters (the template network's) into `buf`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum saf_status saf_objective_initial_params(const struct SafObjective *obj,
                                             double *buf,
                                             size_t len);

/**
 * `J(params)` and its gradient. `grad` may be null.
 *
 * # Safety
 * `params` and (if non-null) `grad` must hold `len` doubles.
 */
enum saf_status saf_objective_value_and_grad(const struct SafObjective *obj,
                                             const double *params,
                                             size_t len,
                                             double *value,
                                             double *grad);

/**
 * Minimizes the objective with conjugate gradients, updating `params` in
 * place. `iterations` receives the number of accepted line searches and
 * may be null.
 *
 * # Safety
 * `params` must hold `len` doubles; `value` must be writable.
 */
enum saf_status saf_objective_train_ncg(const struct SafObjective *obj,
                                        double *params,
                                        size_t len,
                                        size_t max_iterations,
                                        double *value,
                                        size_t *iterations);

/**
 * Network at `params` of the objective, as a new handle.
 *
 * # Safety
 * `params` must hold `len` doubles; `out_net` must be writable.
 */
enum saf_status saf_objective_network(const struct SafObjective *obj,
                                      const double *params,
                                      size_t len,
                                      struct SafNet **out_net);

/**
 * RMSE over target standard deviation, averaged over the `cols` outputs.
 *
 * # Safety
 * `pred` and `target` must each hold `rows x cols` doubles.
 */
enum saf_status saf_nrmse(const double *pred,
                          const double *target,
                          size_t rows,
                          size_t cols,
                          double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAF_H */
