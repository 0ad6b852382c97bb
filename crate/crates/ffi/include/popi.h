#ifndef POPI_H
#define POPI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum {
  POPI_STATUS_OK = 0,
  POPI_STATUS_NULL_POINTER = 1,
  POPI_STATUS_INVALID_ARGUMENT = 2,
  POPI_STATUS_IO = 3,
  POPI_STATUS_PARSE = 4,
  POPI_STATUS_CONFIG = 5,
  POPI_STATUS_INITIAL_COLLISION = 6,
  POPI_STATUS_NO_PATH = 7,
  POPI_STATUS_CHECKPOINT = 8,
  POPI_STATUS_INVARIANT = 9,
  /**
   * Output buffer too small; the required length is still written.
   */
  POPI_STATUS_BUFFER_TOO_SMALL = 10,
  POPI_STATUS_PANIC = 11,
} PopiStatus;

/**
 * Configuration handle.
 */
typedef struct PopiConfig PopiConfig;

/**
 * Occupancy map handle.
 */
typedef struct PopiMap PopiMap;

/**
 * Planned path handle.
 */
typedef struct PopiPath PopiPath;

/**
 * Trained policy handle.
 */
typedef struct PopiPolicy PopiPolicy;

/**
 * Roadmap handle.
 */
typedef struct PopiRoadmap PopiRoadmap;

/**
 * Simulator handle; owns a copy of its map.
 */
typedef struct PopiSim PopiSim;

/**
 * Simulator state handle.
 */
typedef struct PopiState PopiState;

/**
 * SE(2) pose; `theta` in radians.
 */
typedef struct {
  double x;
  double y;
  double theta;
} PopiPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *popi_last_error(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void popi_string_free(char *s);

/**
 * `a ∘ b`.
 */
PopiPose popi_pose_compose(PopiPose a, PopiPose b);

/**
 * `pose` expressed in `frame`.
 */
PopiPose popi_pose_relative(PopiPose pose, PopiPose frame);

/**
 * Loads a JSON config, or the built-in defaults when `path` is null.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` must be writable.
 */
PopiStatus popi_config_new(const char *path, PopiConfig **out);

/**
 * Applies one `key=value` override.
 *
 * # Safety
 * `cfg` must be a live config handle and `assignment` a NUL-terminated string.
 */
PopiStatus popi_config_set(PopiConfig *cfg, const char *assignment);

/**
 * Content hash of the config as a new string.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
PopiStatus popi_config_hash(const PopiConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be null or a config handle not yet freed.
 */
void popi_config_free(PopiConfig *cfg);

/**
 * Bundled layout `"training"` or `"carpet"`, optionally with the central doorway closed.
 *
 * # Safety
 * `layout` must be a NUL-terminated string; `out` must be writable.
 */
PopiStatus popi_map_layout(const char *layout, bool block_center, PopiMap **out);

/**
 * Loads a map file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
PopiStatus popi_map_load(const char *path, PopiMap **out);

/**
 * Whether the world point lies in an occupied cell or off the map.
 *
 * # Safety
 * `map` must be a live map handle; `out` must be writable.
 */
PopiStatus popi_map_occupied(const PopiMap *map, double x, double y, bool *out);

/**
 * # Safety
 * `map` must be null or a map handle not yet freed.
 */
void popi_map_free(PopiMap *map);

/**
 * Simulator over a copy of `map`. `condition` is `"nominal"`, `"carpet"`, `"unseen_grasp"`
 * or `"unseen_chair"`; carpet only changes the dynamics here, the map is the caller's.
 *
 * # Safety
 * `cfg` and `map` must be live handles, `condition` a NUL-terminated string, `out` writable.
 */
PopiStatus popi_sim_new(const PopiConfig *cfg,
                        const PopiMap *map,
                        const char *condition,
                        PopiSim **out);

/**
 * # Safety
 * `sim` must be null or a simulator handle not yet freed.
 */
void popi_sim_free(PopiSim *sim);

/**
 * Resets with the chair at `object` and the robot at its nominal grasp pose.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
PopiStatus popi_sim_reset(const PopiSim *sim, PopiPose object, uint64_t seed, PopiState **out);

/**
 * Advances `state` one step toward the commanded robot pose.
 *
 * # Safety
 * `sim` and `state` must be live handles.
 */
PopiStatus popi_sim_step(const PopiSim *sim, PopiState *state, PopiPose command);

/**
 * Robot pose, chair pose, grasp stress and whether the grasp still holds.
 *
 * # Safety
 * `state` must be a live handle; each output pointer may be null to skip it.
 */
PopiStatus popi_state_get(const PopiState *state,
                          PopiPose *robot,
                          PopiPose *object,
                          double *stress,
                          bool *held);

/**
 * # Safety
 * `state` must be null or a state handle not yet freed.
 */
void popi_state_free(PopiState *state);

/**
 * Builds the roadmap for `map` with the config's planner grid.
 *
 * # Safety
 * `cfg` and `map` must be live handles; `out` must be writable.
 */
PopiStatus popi_roadmap_build(const PopiConfig *cfg, const PopiMap *map, PopiRoadmap **out);

/**
 * # Safety
 * `roadmap` must be a live handle; `out` must be writable.
 */
PopiStatus popi_roadmap_node_count(const PopiRoadmap *roadmap, uintptr_t *out);

/**
 * Plans between two chair poses; [`PopiStatus::NoPath`] when they are not connected.
 *
 * # Safety
 * `cfg` and `roadmap` must be live handles; `out` must be writable.
 */
PopiStatus popi_roadmap_plan(const PopiConfig *cfg,
                             const PopiRoadmap *roadmap,
                             PopiPose start,
                             PopiPose goal,
                             PopiPath **out);

/**
 * # Safety
 * `roadmap` must be null or a roadmap handle not yet freed.
 */
void popi_roadmap_free(PopiRoadmap *roadmap);

/**
 * Copies the path's chair poses into `buf` (capacity `cap`); `len` receives the count.
 *
 * # Safety
 * `path` must be a live handle, `len` writable, and `buf` valid for `cap` poses (or null
 * with `cap == 0` to query the length).
 */
PopiStatus popi_path_chair_poses(const PopiPath *path,
                                 PopiPose *buf,
                                 uintptr_t cap,
                                 uintptr_t *len);

/**
 * Sum of edge costs along the path.
 *
 * # Safety
 * `path` must be a live handle; `out` must be writable.
 */
PopiStatus popi_path_cost(const PopiPath *path, double *out);

/**
 * # Safety
 * `path` must be null or a path handle not yet freed.
 */
void popi_path_free(PopiPath *path);

/**
 * Loads a checkpoint and checks it against the config's policy parameters. `global`
 * selects the whole-route policy instead of the waypoint-relative one.
 *
 * # Safety
 * `cfg` must be a live handle, `path` a NUL-terminated string, `out` writable.
 */
PopiStatus popi_policy_load(const PopiConfig *cfg, const char *path, bool global, PopiPolicy **out);

/**
 * Samples one action sequence from `n_obs` robot and chair poses expressed in the goal
 * frame. `n_obs` must equal the policy's observation horizon.
 *
 * # Safety
 * `policy` must be a live handle, `obs_robot`/`obs_object` valid for `n_obs` poses,
 * `buf` valid for `cap` poses and `len` writable.
 */
PopiStatus popi_policy_sample(const PopiPolicy *policy,
                              const PopiPose *obs_robot,
                              const PopiPose *obs_object,
                              uintptr_t n_obs,
                              uint64_t seed,
                              PopiPose *buf,
                              uintptr_t cap,
                              uintptr_t *len);

/**
 * Number of poses in one sampled action sequence.
 *
 * # Safety
 * `policy` must be a live handle; `out` must be writable.
 */
PopiStatus popi_policy_action_horizon(const PopiPolicy *policy, uintptr_t *out);

/**
 * # Safety
 * `policy` must be null or a policy handle not yet freed.
 */
void popi_policy_free(PopiPolicy *policy);

/**
 * Runs one episode on the route goal `distance` meters along the bundled test route and
 * returns the episode record as a JSON string.
 *
 * `method` is `"popi"`, `"local"`, `"global"`, `"astar"` or `"rrt"`; `policy` may be null
 * for the planner-only methods.
 *
 * # Safety
 * `cfg` must be a live handle, `policy` null or live, strings NUL-terminated, `out` writable.
 */
PopiStatus popi_run_episode(const PopiConfig *cfg,
                            const PopiPolicy *policy,
                            const char *method,
                            const char *condition,
                            double distance,
                            uint64_t seed,
                            char **out);

/**
 * Library version as a static string.
 */
const char *popi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POPI_H */
