#ifndef SCP_MPPI_H
#define SCP_MPPI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ScpStatus {
  SCP_STATUS_OK = 0,
  SCP_STATUS_NULL_POINTER = 1,
  SCP_STATUS_INVALID_ARGUMENT = 2,
  SCP_STATUS_INVALID_CONFIG = 3,
  SCP_STATUS_PARSE = 4,
  SCP_STATUS_IO = 5,
  SCP_STATUS_SOLVER = 6,
  SCP_STATUS_PANIC = 7,
} ScpStatus;

/**
 * Opaque suite configuration (solver, trial limits, sensor, forest).
 */
typedef struct ScpConfig ScpConfig;

/**
 * Opaque receding-horizon controller that keeps its warm start between calls.
 */
typedef struct ScpController ScpController;

/**
 * Opaque environment: bounds, start, goal and cylinder obstacles.
 */
typedef struct ScpEnvironment ScpEnvironment;

/**
 * A vertical cylinder obstacle in the horizontal plane.
 */
typedef struct ScpCylinder {
  double x;
  double y;
  double radius;
} ScpCylinder;

/**
 * Metrics of one closed-loop trial.
 */
typedef struct ScpTrialSummary {
  /**
   * 1 reached, 2 collided, 3 stuck, 4 timeout.
   */
  uint32_t outcome;
  size_t steps;
  double flight_time;
  double avg_speed;
  /**
   * NaN when fewer than three commands were executed.
   */
  double smoothness;
  double solve_rate;
} ScpTrialSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes, into `buf`. Returns the full message length
 * (excluding the terminator), so a call with `len = 0` sizes the buffer.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
size_t scp_last_error_message(char *buf, size_t len);

/**
 * Creates a configuration holding the built-in defaults.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum ScpStatus scp_config_default(struct ScpConfig **out);

/**
 * Loads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for one pointer write.
 */
enum ScpStatus scp_config_load(const char *path, struct ScpConfig **out);

/**
 * Sets one key with a TOML-syntax value, e.g. `("lambda", "5.0")` or
 * `("sigma", "[0.5, 0.5, 0.05]")`. The configuration is left unchanged
 * on failure.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` NUL-terminated.
 */
enum ScpStatus scp_config_set(struct ScpConfig *cfg, const char *key, const char *value);

/**
 * Checks the solver settings without building a controller.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum ScpStatus scp_config_validate(const struct ScpConfig *cfg);

/**
 * # Safety
 * `cfg` must be null or come from this library, and not be used afterwards.
 */
void scp_config_free(struct ScpConfig *cfg);

/**
 * Builds a controller from validated solver settings, cold-started.
 *
 * # Safety
 * `cfg` must come from this library; `out` valid for one pointer write.
 */
enum ScpStatus scp_controller_new(const struct ScpConfig *cfg, struct ScpController **out);

/**
 * One receding-horizon step: plans from `position` toward `goal` given the
 * obstacles sensed so far, writes the first command (m/s) to `command`,
 * and keeps the plan as the next warm start.
 *
 * # Safety
 * `position`, `goal` and `command` must each point at 3 doubles;
 * `obstacles` must be valid for `count` elements (may be null when 0).
 */
enum ScpStatus scp_controller_solve(struct ScpController *ctrl,
                                    const double *position,
                                    const double *goal,
                                    const struct ScpCylinder *obstacles,
                                    size_t count,
                                    uint64_t seed,
                                    double *command);

/**
 * Drops the warm start so the next solve starts from zero controls.
 *
 * # Safety
 * `ctrl` must come from this library.
 */
enum ScpStatus scp_controller_reset(struct ScpController *ctrl);

/**
 * # Safety
 * `ctrl` must be null or come from this library, and not be used afterwards.
 */
void scp_controller_free(struct ScpController *ctrl);

/**
 * Loads an environment file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` valid for one pointer write.
 */
enum ScpStatus scp_environment_load(const char *path, struct ScpEnvironment **out);

/**
 * Saves an environment file.
 *
 * # Safety
 * `env` must come from this library; `path` NUL-terminated.
 */
enum ScpStatus scp_environment_save(const struct ScpEnvironment *env, const char *path);

/**
 * Generates a solvable forest for a density tier (`"low"`, `"mid"`,
 * `"high"`) using the field settings in `cfg`.
 *
 * # Safety
 * `cfg` must come from this library; `tier` NUL-terminated; `out` valid
 * for one pointer write.
 */
enum ScpStatus scp_environment_generate(const struct ScpConfig *cfg,
                                        const char *tier,
                                        uint64_t seed,
                                        struct ScpEnvironment **out);

/**
 * Number of obstacles, or 0 for a null handle.
 *
 * # Safety
 * `env` must be null or come from this library.
 */
size_t scp_environment_obstacle_count(const struct ScpEnvironment *env);

/**
 * Copies up to `capacity` obstacles into `out` and returns how many were
 * written.
 *
 * # Safety
 * `env` must be null or come from this library; `out` valid for
 * `capacity` elements.
 */
size_t scp_environment_obstacles(const struct ScpEnvironment *env,
                                 struct ScpCylinder *out,
                                 size_t capacity);

/**
 * # Safety
 * `env` must be null or come from this library, and not be used afterwards.
 */
void scp_environment_free(struct ScpEnvironment *env);

/**
 * Runs one closed-loop trial with the solver variant and limits in `cfg`.
 *
 * # Safety
 * `env` and `cfg` must come from this library; `out` must be writable.
 */
enum ScpStatus scp_run_trial(const struct ScpEnvironment *env,
                             const struct ScpConfig *cfg,
                             uint64_t seed,
                             struct ScpTrialSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCP_MPPI_H */
