#ifndef TRAJOCC_H
#define TRAJOCC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TRAJOCC_OUTCOME_RUNNING = 0,
  TRAJOCC_OUTCOME_GOAL = 1,
  TRAJOCC_OUTCOME_COLLISION = 2,
  TRAJOCC_OUTCOME_TIMEOUT = 3,
} TrajoccOutcome;

typedef enum {
  TRAJOCC_STATUS_OK = 0,
  TRAJOCC_STATUS_NULL_POINTER = 1,
  TRAJOCC_STATUS_CONFIG = 2,
  TRAJOCC_STATUS_USAGE = 3,
  TRAJOCC_STATUS_PARSE = 4,
  TRAJOCC_STATUS_SHAPE = 5,
  TRAJOCC_STATUS_NUMERIC = 6,
  TRAJOCC_STATUS_RANGE = 7,
  TRAJOCC_STATUS_IO = 8,
  TRAJOCC_STATUS_PANIC = 9,
  TRAJOCC_STATUS_INVALID_UTF8 = 10,
} TrajoccStatus;

/**
 * One navigation environment instance.
 */
typedef struct TrajoccEnv TrajoccEnv;

/**
 * Primitive bank and classified grid for scoring range hits.
 */
typedef struct TrajoccEvaluator TrajoccEvaluator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *trajocc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *trajocc_version(void);

/**
 * Builds an evaluator from a TOML run configuration (null for defaults).
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `out` must be writable.
 */
TrajoccStatus trajocc_evaluator_new(const char *config_toml, TrajoccEvaluator **out);

/**
 * # Safety
 * `ev` must come from [`trajocc_evaluator_new`]; `out` must be writable.
 */
TrajoccStatus trajocc_evaluator_num_trajectories(const TrajoccEvaluator *ev, size_t *out);

/**
 * Scores every trajectory against robot-frame hit points given as
 * `n_points` consecutive `(x, y, z)` triples. Writes one value in `[0, 1]`
 * per trajectory into `out_h`, which must hold `out_len` entries.
 *
 * # Safety
 * `points` must hold `3 * n_points` doubles (may be null when
 * `n_points == 0`); `out_h` must hold `out_len` doubles.
 */
TrajoccStatus trajocc_evaluator_evaluate(TrajoccEvaluator *ev,
                                         const double *points,
                                         size_t n_points,
                                         double *out_h,
                                         size_t out_len);

/**
 * # Safety
 * `ev` must be null or come from [`trajocc_evaluator_new`], and must not be
 * used afterwards.
 */
void trajocc_evaluator_free(TrajoccEvaluator *ev);

/**
 * Creates an environment on a bundled map name or map file path.
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `map` must be
 * NUL-terminated; `out` must be writable.
 */
TrajoccStatus trajocc_env_new(const char *config_toml,
                              const char *map,
                              uint64_t seed,
                              TrajoccEnv **out);

/**
 * Length of the flat observation: stacked block, then target distance,
 * target angle, previous linear and angular velocity.
 *
 * # Safety
 * `env` must come from [`trajocc_env_new`]; `out` must be writable.
 */
TrajoccStatus trajocc_env_obs_len(const TrajoccEnv *env, size_t *out);

/**
 * # Safety
 * `env` must come from [`trajocc_env_new`]; `out` must be writable.
 */
TrajoccStatus trajocc_env_num_actions(const TrajoccEnv *env, size_t *out);

/**
 * Starts an episode seeded with `seed` and writes the first observation.
 *
 * # Safety
 * `env` must come from [`trajocc_env_new`]; `obs` must hold `obs_len` floats.
 */
TrajoccStatus trajocc_env_reset(TrajoccEnv *env, uint64_t seed, float *obs, size_t obs_len);

/**
 * Applies one discrete action. `done` receives 1 when the episode ended.
 *
 * # Safety
 * `env` must come from [`trajocc_env_new`]; `obs` must hold `obs_len`
 * floats; `reward`, `done` and `outcome` must be writable.
 */
TrajoccStatus trajocc_env_step(TrajoccEnv *env,
                               size_t action,
                               float *obs,
                               size_t obs_len,
                               double *reward,
                               int32_t *done,
                               TrajoccOutcome *outcome);

/**
 * # Safety
 * `env` must be null or come from [`trajocc_env_new`], and must not be
 * used afterwards.
 */
void trajocc_env_free(TrajoccEnv *env);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJOCC_H */
