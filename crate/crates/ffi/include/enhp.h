#ifndef ENHP_H
#define ENHP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum EnhpStatus {
  ENHP_STATUS_OK = 0,
  ENHP_STATUS_NULL_POINTER = 1,
  ENHP_STATUS_INVALID_ARGUMENT = 2,
  ENHP_STATUS_IO = 3,
  ENHP_STATUS_PARSE = 4,
  ENHP_STATUS_NUMERICAL = 5,
  ENHP_STATUS_PANIC = 6,
} EnhpStatus;

// A fitted model.
typedef struct EnhpModel EnhpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *enhp_version(void);

// Message for the last failed call on this thread, or an empty string. The
// pointer stays valid until the next enhp call on the same thread.
const char *enhp_last_error(void);

// Loads a checkpoint. On success `*out` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum EnhpStatus enhp_model_load(const char *path, struct EnhpModel **out);

// Writes the model as a checkpoint without provenance.
//
// # Safety
// `model` must come from `enhp_model_load`; `path` must be NUL-terminated.
enum EnhpStatus enhp_model_save(const struct EnhpModel *model, const char *path);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from `enhp_model_load` and not be used afterwards.
void enhp_model_free(struct EnhpModel *model);

// Number of event types M, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from `enhp_model_load`.
uintptr_t enhp_model_num_types(const struct EnhpModel *model);

// Embedding dimension D, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from `enhp_model_load`.
uintptr_t enhp_model_embed_dim(const struct EnhpModel *model);

// Impact of a type-`source` event on the type-`target` intensity after a
// gap `dt >= 0`.
//
// # Safety
// `model` must come from `enhp_model_load`; `out` must be valid.
enum EnhpStatus enhp_model_impact(const struct EnhpModel *model,
                                  uintptr_t source,
                                  uintptr_t target,
                                  double dt,
                                  double *out);

// Per-type intensities at time `t` given the `n` history events (all at or
// before `t`, in time order). Writes M values to `out`.
//
// # Safety
// `times` and `types` must hold `n` values; `out` must hold `out_len`.
enum EnhpStatus enhp_model_intensities(const struct EnhpModel *model,
                                       const double *times,
                                       const uintptr_t *types,
                                       uintptr_t n,
                                       double t,
                                       double *out,
                                       uintptr_t out_len);

// Log-likelihood of one sequence observed on `[0, t_end]`, with the
// compensator integrated by the trapezoid rule at `knots_per_interval`
// interior knots between consecutive events.
//
// # Safety
// `times` and `types` must hold `n` values; `out` must be valid.
enum EnhpStatus enhp_model_log_likelihood(const struct EnhpModel *model,
                                          const double *times,
                                          const uintptr_t *types,
                                          uintptr_t n,
                                          double t_end,
                                          uintptr_t knots_per_interval,
                                          double *out);

// Cumulative impacts over `[0, horizon]` (trapezoid with `steps` steps) as an
// M×M row-major matrix; row is the source type.
//
// # Safety
// `out` must hold `out_len` values.
enum EnhpStatus enhp_model_cumulative_impact(const struct EnhpModel *model,
                                             double horizon,
                                             uintptr_t steps,
                                             double *out,
                                             uintptr_t out_len);

// Next-event prediction after the `n` history events: expected time (with
// the integral cut at `h_mult * mean_gap` past the last event) and the most
// intense type at that time.
//
// # Safety
// `times` and `types` must hold `n` values; `out_time` and `out_type` must
// be valid.
enum EnhpStatus enhp_model_predict_next(const struct EnhpModel *model,
                                        const double *times,
                                        const uintptr_t *types,
                                        uintptr_t n,
                                        double mean_gap,
                                        double h_mult,
                                        double *out_time,
                                        uintptr_t *out_type);

// Runs the gradient check on `num_models` random models. `*out_worst`
// receives the worst relative error; the status is `ENHP_STATUS_NUMERICAL`
// when it exceeds the tolerance.
//
// # Safety
// `out_worst` must be valid.
enum EnhpStatus enhp_gradcheck(uint64_t seed, uintptr_t num_models, double *out_worst);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENHP_H */
