#ifndef LFGC_H
#define LFGC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfgcStatus {
  LFGC_STATUS_OK = 0,
  LFGC_STATUS_NULL_POINTER = 1,
  LFGC_STATUS_INVALID_UTF8 = 2,
  LFGC_STATUS_INVALID_ARGUMENT = 3,
  LFGC_STATUS_PARSE = 4,
  LFGC_STATUS_DOMAIN = 5,
  LFGC_STATUS_IO = 6,
  LFGC_STATUS_PANIC = 7,
} LfgcStatus;

typedef enum LfgcOutcomeClass {
  LFGC_OUTCOME_CLASS_SUCCESS = 0,
  LFGC_OUTCOME_CLASS_FAIL_TO_MERGE = 1,
  LFGC_OUTCOME_CLASS_COLLISION = 2,
} LfgcOutcomeClass;

/**
 * Finished episode with its event log.
 */
typedef struct LfgcEpisode LfgcEpisode;

/**
 * Parsed scenario.
 */
typedef struct LfgcScenario LfgcScenario;

/**
 * Episode result. Ids and steps are -1 when absent.
 */
typedef struct LfgcOutcome {
  enum LfgcOutcomeClass kind;
  int64_t final_step;
  int64_t merge_step;
  int64_t front_id;
  int64_t rear_id;
  int64_t collided_with;
} LfgcOutcome;

typedef struct LfgcState {
  double x;
  double y;
  double v;
  double psi;
} LfgcState;

typedef struct LfgcBoundary {
  double x;
  double vx;
  double ax;
  double y;
  double vy;
  double ay;
} LfgcBoundary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *lfgc_last_error(void);

/**
 * Parses a scenario JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LfgcStatus lfgc_scenario_from_json(const char *json, struct LfgcScenario **out);

/**
 * Overrides the scenario's RNG seed.
 *
 * # Safety
 * `scenario` must come from [`lfgc_scenario_from_json`].
 */
enum LfgcStatus lfgc_scenario_set_seed(struct LfgcScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be null or come from [`lfgc_scenario_from_json`], and not
 * be used afterwards.
 */
void lfgc_scenario_free(struct LfgcScenario *scenario);

/**
 * Runs a closed-loop episode.
 *
 * # Safety
 * `scenario` must come from [`lfgc_scenario_from_json`]; `out` must be valid.
 */
enum LfgcStatus lfgc_run(const struct LfgcScenario *scenario, struct LfgcEpisode **out);

/**
 * # Safety
 * `episode` must come from [`lfgc_run`]; `out` must be valid.
 */
enum LfgcStatus lfgc_episode_outcome(const struct LfgcEpisode *episode, struct LfgcOutcome *out);

/**
 * JSONL event log. With `canonical` set, timing fields are left out so
 * identical runs give identical bytes. Free the result with
 * [`lfgc_string_free`].
 *
 * # Safety
 * `episode` must come from [`lfgc_run`]; `out` must be valid.
 */
enum LfgcStatus lfgc_episode_log_jsonl(const struct LfgcEpisode *episode,
                                       bool canonical,
                                       char **out);

/**
 * # Safety
 * `episode` must be null or come from [`lfgc_run`], and not be used
 * afterwards.
 */
void lfgc_episode_free(struct LfgcEpisode *episode);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void lfgc_string_free(char *s);

/**
 * IDM acceleration with default parameters. Pass `INFINITY` as `gap` on a
 * free road.
 *
 * # Safety
 * `out` must be valid.
 */
enum LfgcStatus lfgc_idm_accel(double v, double gap, double dv, double a_bound, double *out);

/**
 * One kinematic bicycle step with default vehicle parameters.
 *
 * # Safety
 * `state` and `out` must be valid.
 */
enum LfgcStatus lfgc_step_bicycle(const struct LfgcState *state,
                                  double a,
                                  double delta_f,
                                  double dt,
                                  struct LfgcState *out);

/**
 * Quintic coefficients (`c0..c5`) on each axis joining two boundaries.
 *
 * # Safety
 * `ini` and `term` must be valid; `out_x` and `out_y` must each point to six
 * writable doubles.
 */
enum LfgcStatus lfgc_solve_quintic(const struct LfgcBoundary *ini,
                                   const struct LfgcBoundary *term,
                                   double duration,
                                   double *out_x,
                                   double *out_y);

/**
 * Posterior leader probability from a prior and the log-likelihoods of the
 * observation under each role, with the default floor.
 *
 * # Safety
 * `out` must be valid.
 */
enum LfgcStatus lfgc_belief_update(double p_leader,
                                   double ll_leader,
                                   double ll_follower,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LFGC_H */
