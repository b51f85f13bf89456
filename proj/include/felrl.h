/* C interface to the felrl shared library.
 *
 * All functions return FELRL_OK (0) on success. On failure they return a
 * nonzero status and felrl_last_error() describes the problem (thread-local).
 * Handles are opaque; every *_create has a matching *_destroy.
 */
#ifndef FELRL_H
#define FELRL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  FELRL_OK = 0,
  FELRL_CONFIG_ERROR = 2,
  FELRL_RUN_ERROR = 3
} felrl_status;

const char* felrl_version(void);
const char* felrl_last_error(void);

/* ---- environments ---- */

typedef struct felrl_env felrl_env;

/* kind: "pendulum" or "fel-sim"; config_json: same schema as the experiment
 * config's "env_config" object (NULL or "" for defaults). */
felrl_env* felrl_env_create(const char* kind, const char* config_json, uint64_t seed);
void felrl_env_destroy(felrl_env* env);

int felrl_env_obs_dim(const felrl_env* env);
int felrl_env_act_dim(const felrl_env* env);
long felrl_env_step_count(const felrl_env* env);

/* obs_out must hold obs_dim doubles. */
felrl_status felrl_env_reset(felrl_env* env, double* obs_out);
/* action holds act_dim doubles; obs_out obs_dim doubles. */
felrl_status felrl_env_step(felrl_env* env, const double* action, double* obs_out,
                            double* reward_out, int* done_out);

/* ---- experiments ---- */

/* Runs the experiment described by the JSON config file; writes all artifacts
 * (per-seed curves, checkpoints, summary, manifest) under out_dir. */
felrl_status felrl_run_experiment(const char* config_path, const char* out_dir);

/* Plays the deterministic policy from checkpoint_path on a fresh environment
 * for n_episodes and writes per-episode rows to out_csv. */
felrl_status felrl_verify(const char* checkpoint_path, const char* env_kind,
                          const char* env_config_json, int n_episodes, uint64_t seed,
                          int horizon, const char* out_csv);

/* Aggregates one column across run CSVs (mean/std per row index) into out_csv. */
felrl_status felrl_aggregate(const char* const* csv_paths, int n_paths, const char* column,
                             const char* out_csv);

/* Writes the config files of a named ablation suite into out_dir.
 * name: naf-variants | naf-variants-noise | ensemble-size | naf-vs-aedyna */
felrl_status felrl_suite(const char* name, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* FELRL_H */
