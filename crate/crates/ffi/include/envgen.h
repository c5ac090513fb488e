#ifndef ENVGEN_H
#define ENVGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Bit set in the physics mask when the floor plan passes.
 */
#define ENVGEN_PHYSICS_FLOOR_PLAN 1

/*
 Bit set in the physics mask when every object is supported and free of
 collisions.
 */
#define ENVGEN_PHYSICS_ENTITY 2

/*
 Bit set in the physics mask when every kept relation holds.
 */
#define ENVGEN_PHYSICS_RELATION 4

typedef enum EnvgenStatus {
  ENVGEN_STATUS_OK = 0,
  ENVGEN_STATUS_NULL_POINTER = 1,
  ENVGEN_STATUS_INVALID_UTF8 = 2,
  ENVGEN_STATUS_INVALID_INPUT = 3,
  ENVGEN_STATUS_UNSATISFIABLE = 4,
  ENVGEN_STATUS_STAGE_FAILED = 5,
  ENVGEN_STATUS_CONFIG_ERROR = 6,
  ENVGEN_STATUS_PANIC = 7,
} EnvgenStatus;

/*
 A simulated environment.
 */
typedef struct EnvgenEnvironment EnvgenEnvironment;

/*
 Behavior plans, one tree per subtask.
 */
typedef struct EnvgenPlan EnvgenPlan;

/*
 An ordered list of logical trajectories.
 */
typedef struct EnvgenTrajectories EnvgenTrajectories;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string. Do not free.
 */
const char *envgen_version(void);

/*
 The message of the last failed call on this thread, or NULL when the last
 call succeeded. The caller frees the copy with `envgen_string_free`.
 */
char *envgen_last_error(void);

/*
 # Safety
 `s` must come from this library and not have been freed. NULL is ignored.
 */
void envgen_string_free(char *s);

/*
 Parses a plan document (a JSON list of decision trees) whose trees belong
 to the subtasks named in `subtask_ids_json`, a JSON list of strings.

 # Safety
 String arguments must be NUL-terminated; `out` must be writable.
 */
enum EnvgenStatus envgen_plan_parse(const char *plan_json,
                                    const char *subtask_ids_json,
                                    struct EnvgenPlan **out);

/*
 Number of root-to-leaf decision paths over all trees.

 # Safety
 `plan` must be a live handle; `out` must be writable.
 */
enum EnvgenStatus envgen_plan_path_count(const struct EnvgenPlan *plan, uintptr_t *out);

/*
 # Safety
 `plan` must come from `envgen_plan_parse` and not have been freed. NULL is ignored.
 */
void envgen_plan_free(struct EnvgenPlan *plan);

/*
 Every combination of one decision path per subtask.

 # Safety
 `plan` must be a live handle; `out` must be writable.
 */
enum EnvgenStatus envgen_trajectories_enumerate(const struct EnvgenPlan *plan,
                                                struct EnvgenTrajectories **out);

/*
 A small subset covering every decision path of `set`.

 # Safety
 `set` must be a live handle; `out` must be writable.
 */
enum EnvgenStatus envgen_trajectories_minimal(const struct EnvgenTrajectories *set,
                                              struct EnvgenTrajectories **out);

/*
 # Safety
 `set` must be a live handle; `out` must be writable.
 */
enum EnvgenStatus envgen_trajectories_len(const struct EnvgenTrajectories *set, uintptr_t *out);

/*
 The trajectory set as a JSON document.

 # Safety
 `set` must be a live handle; `out` must be writable.
 */
enum EnvgenStatus envgen_trajectories_to_json(const struct EnvgenTrajectories *set, char **out);

/*
 # Safety
 `set` must come from this library and not have been freed. NULL is ignored.
 */
void envgen_trajectories_free(struct EnvgenTrajectories *set);

/*
 Parses a complete environment document.

 # Safety
 `json` must be NUL-terminated; `out` must be writable.
 */
enum EnvgenStatus envgen_environment_parse(const char *json, struct EnvgenEnvironment **out);

/*
 Places the objects, doors and windows of an environment document whose
 placements may be missing, relaxing enrichment relations if needed.
 `solver_json` holds solver settings and may be NULL for the defaults.

 # Safety
 String arguments must be NUL-terminated or NULL where allowed; `out` must be writable.
 */
enum EnvgenStatus envgen_environment_arrange(const char *json,
                                             const char *solver_json,
                                             struct EnvgenEnvironment **out);

/*
 # Safety
 `env` must be a live handle; `out` must be writable.
 */
enum EnvgenStatus envgen_environment_to_json(const struct EnvgenEnvironment *env, char **out);

/*
 Looks up `entity.attribute` in the environment metadata; missing entries
 read as `absent`.

 # Safety
 `env` must be a live handle, strings NUL-terminated, `out` writable.
 */
enum EnvgenStatus envgen_environment_metadata(const struct EnvgenEnvironment *env,
                                              const char *entity,
                                              const char *attribute,
                                              char **out);

/*
 Runs the physical plausibility checks and writes a mask of
 `ENVGEN_PHYSICS_*` bits for the dimensions that pass.

 # Safety
 `env` must be a live handle; `out_mask` must be writable.
 */
enum EnvgenStatus envgen_environment_check_physics(const struct EnvgenEnvironment *env,
                                                   uint32_t *out_mask);

/*
 # Safety
 `env` must come from this library and not have been freed. NULL is ignored.
 */
void envgen_environment_free(struct EnvgenEnvironment *env);

/*
 Runs every pipeline stage for a task under cassette replay, writing the
 run directory `out_dir`. `catalog_path` may be NULL to use `catalog.json`
 next to the task file.

 # Safety
 String arguments must be NUL-terminated or NULL where allowed.
 */
enum EnvgenStatus envgen_run_all(const char *task_path,
                                 const char *cassette_path,
                                 const char *catalog_path,
                                 const char *out_dir,
                                 uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENVGEN_H */
