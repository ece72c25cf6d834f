#ifndef LGVI_H
#define LGVI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of a call. The config, model and solver codes match the exit codes of the CLI.
 */
typedef enum LgviStatus {
  LGVI_STATUS_OK = 0,
  LGVI_STATUS_CONFIG_ERROR = 2,
  LGVI_STATUS_MODEL_ERROR = 3,
  LGVI_STATUS_SOLVER_ERROR = 4,
  LGVI_STATUS_NULL_POINTER = 10,
  LGVI_STATUS_INVALID_ARGUMENT = 11,
  LGVI_STATUS_PANIC = 12,
} LgviStatus;

typedef enum LgviSolver {
  LGVI_SOLVER_SIMULATE = 0,
  LGVI_SOLVER_INDIRECT = 1,
  LGVI_SOLVER_DIRECT = 2,
} LgviSolver;

/**
 * Outputs of one run; created by [`lgvi_scenario_run`].
 */
typedef struct LgviRun LgviRun;

/**
 * A validated scenario; created by [`lgvi_scenario_from_toml`] or [`lgvi_scenario_bundled`].
 */
typedef struct LgviScenario LgviScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *lgvi_version(void);

/**
 * Message of the most recent failure on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *lgvi_last_error_message(void);

void lgvi_clear_error(void);

/**
 * `out` (9 entries, row-major) receives `exp(hat(v))` for `v` (3 entries).
 *
 * # Safety
 * `v` points to 3 readable doubles and `out` to 9 writable doubles.
 */
enum LgviStatus lgvi_exp_so3(const double *v, double *out);

/**
 * `out` (3 entries) receives the rotation vector of `r` (9 entries, row-major),
 * with angle in `[0, pi]`. Fails with a model error if `r` is not a rotation.
 *
 * # Safety
 * `r` points to 9 readable doubles and `out` to 3 writable doubles.
 */
enum LgviStatus lgvi_log_so3(const double *r, double *out);

/**
 * Number of bundled scenarios.
 */
size_t lgvi_bundled_count(void);

/**
 * Name of bundled scenario `index`, or NULL when out of range. Static storage.
 */
const char *lgvi_bundled_name(size_t index);

/**
 * Parses and validates a scenario from its TOML text.
 *
 * # Safety
 * `toml` is a NUL-terminated string; `out` is writable. On failure `*out` is set to NULL.
 */
enum LgviStatus lgvi_scenario_from_toml(const char *toml, struct LgviScenario **out);

/**
 * Loads a bundled scenario by name (see [`lgvi_bundled_name`]).
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is writable. On failure `*out` is set to NULL.
 */
enum LgviStatus lgvi_scenario_bundled(const char *name, struct LgviScenario **out);

/**
 * Replaces the random seed.
 *
 * # Safety
 * `scenario` is NULL or a live handle.
 */
enum LgviStatus lgvi_scenario_set_seed(struct LgviScenario *scenario, uint64_t seed);

/**
 * Replaces the convergence tolerance of both solvers.
 *
 * # Safety
 * `scenario` is NULL or a live handle.
 */
enum LgviStatus lgvi_scenario_set_tolerance(struct LgviScenario *scenario, double tolerance);

/**
 * Replaces the iteration limit of both solvers.
 *
 * # Safety
 * `scenario` is NULL or a live handle.
 */
enum LgviStatus lgvi_scenario_set_max_iterations(struct LgviScenario *scenario,
                                                 size_t max_iterations);

/**
 * Selects the solver; the indirect solver is limited to the dumbbell and pendulum.
 *
 * # Safety
 * `scenario` is NULL or a live handle.
 */
enum LgviStatus lgvi_scenario_set_solver(struct LgviScenario *scenario, enum LgviSolver solver);

/**
 * # Safety
 * `scenario` is NULL or a handle not yet freed.
 */
void lgvi_scenario_free(struct LgviScenario *scenario);

/**
 * Runs the scenario. A solver that stops without converging still yields a
 * run; check [`lgvi_run_converged`].
 *
 * # Safety
 * `scenario` is a live handle; `out` is writable. On failure `*out` is set to NULL.
 */
enum LgviStatus lgvi_scenario_run(const struct LgviScenario *scenario, struct LgviRun **out);

/**
 * # Safety
 * `run` is NULL or a handle not yet freed.
 */
void lgvi_run_free(struct LgviRun *run);

/**
 * False for NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
bool lgvi_run_converged(const struct LgviRun *run);

/**
 * Control cost; NaN for NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
double lgvi_run_cost(const struct LgviRun *run);

/**
 * Terminal violation of the re-propagated trajectory; NaN for NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
double lgvi_run_violation(const struct LgviRun *run);

/**
 * Solver iterations; zero for NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
size_t lgvi_run_iterations(const struct LgviRun *run);

/**
 * Number of integration steps; zero for NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
size_t lgvi_run_steps(const struct LgviRun *run);

/**
 * Contents of an output file by name (`trajectory.csv`, `diagnostics.csv`,
 * `convergence.csv`, `summary.json`), or NULL.
 *
 * # Safety
 * `run` is NULL or a live handle; `name` is NULL or a NUL-terminated string.
 */
const char *lgvi_run_file(const struct LgviRun *run, const char *name);

/**
 * The summary as JSON, or NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
const char *lgvi_run_summary_json(const struct LgviRun *run);

/**
 * Shape of the trajectory table: one row per state, columns as in `trajectory.csv`.
 *
 * # Safety
 * `run` is a live handle; `rows` and `columns` are writable.
 */
enum LgviStatus lgvi_run_trajectory_shape(const struct LgviRun *run, size_t *rows, size_t *columns);

/**
 * Row-major trajectory table owned by the run, or NULL.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
const double *lgvi_run_trajectory_data(const struct LgviRun *run);

/**
 * Name of trajectory column `index`, or NULL when out of range.
 *
 * # Safety
 * `run` is NULL or a live handle.
 */
const char *lgvi_run_trajectory_column(const struct LgviRun *run, size_t index);

/**
 * Writes every output file, plus `timing.json`, into `dir`.
 *
 * # Safety
 * `run` is a live handle; `dir` is a NUL-terminated path.
 */
enum LgviStatus lgvi_run_write(const struct LgviRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LGVI_H */
