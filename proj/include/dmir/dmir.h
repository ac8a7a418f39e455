/* C interface to the dmir library: logged-data ingest, a simulated
 * recommendation environment, a causal world model of user feedback, the
 * policy training loop, ranking evaluation and the latent-recovery bench.
 *
 * Conventions:
 *  - Every fallible call returns a dmir_status; DMIR_OK is 0.
 *  - On failure, dmir_last_error() describes the most recent error of the
 *    calling thread.
 *  - Objects are opaque handles created by *_open/*_create/*_fit calls and
 *    released with the matching *_close; close functions accept NULL.
 *  - Configuration strings are JSON documents; unknown keys are ignored and
 *    missing keys take the documented defaults.
 */
#ifndef DMIR_H
#define DMIR_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmir_status {
    DMIR_OK = 0,
    DMIR_ERROR_NULL_ARGUMENT = 1,
    DMIR_ERROR_INVALID_ARGUMENT = 2,
    DMIR_ERROR_IO = 3,
    DMIR_ERROR_RUNTIME = 4
} dmir_status;

/* Message for the calling thread's most recent failure; empty string if none.
 * The pointer stays valid until the next failing dmir call on this thread. */
const char* dmir_last_error(void);

const char* dmir_version(void);

typedef struct dmir_dataset dmir_dataset;
typedef struct dmir_env dmir_env;
typedef struct dmir_world_model dmir_world_model;

/* ---------- datasets ---------- */

/* Ingests raw CSVs: interactions with header user,item,rating,timestamp and
 * an optional trust file (NULL for none) with header truster,trustee
 * [,timestamp]. options_json keys: binarize_threshold, smoothing, n_buckets,
 * neighbor_cap; NULL for defaults. */
dmir_status dmir_dataset_ingest(const char* interactions_csv_path,
                                const char* trust_csv_path,
                                const char* options_json, dmir_dataset** out);

/* Opens a canonical dataset directory (interactions.csv, trust.csv,
 * meta.json). */
dmir_status dmir_dataset_open(const char* dir, dmir_dataset** out);

dmir_status dmir_dataset_save(const dmir_dataset* ds, const char* dir);

dmir_status dmir_dataset_counts(const dmir_dataset* ds, int32_t* n_users,
                                int32_t* n_items, int64_t* n_records);

/* Per-user temporal split; earliest floor(ratio * len) records go to train. */
dmir_status dmir_dataset_split(const dmir_dataset* ds, double ratio,
                               dmir_dataset** train, dmir_dataset** test);

void dmir_dataset_close(dmir_dataset* ds);

/* Generates the self-contained synthetic benchmark directory: dataset files
 * plus the generating environment under <dir>/env. options_json keys: users,
 * items, rank, horizon, n_buckets, neighbors_per_user, alpha, embed_scale,
 * seed; NULL for defaults. */
dmir_status dmir_synth_write(const char* options_json, const char* dir);

/* ---------- simulated environment ---------- */

/* Fits the logistic matrix-factorization ground truth on a dataset.
 * options_json keys: rank, epochs, lr, negatives_per_positive, alpha,
 * horizon, seed. */
dmir_status dmir_env_fit(const dmir_dataset* ds, const char* options_json,
                         dmir_env** out);

dmir_status dmir_env_open(const char* dir, dmir_env** out);
dmir_status dmir_env_save(const dmir_env* env, const char* dir);

/* Current acceptance probability including the interest decay of repeats;
 * does not advance the environment. */
dmir_status dmir_env_accept_probability(const dmir_env* env, int32_t user,
                                        int32_t item, double* out);

/* Samples feedback and increments the exposure counter. Either output pointer
 * may be NULL. */
dmir_status dmir_env_step(dmir_env* env, int32_t user, int32_t item,
                          int32_t* feedback, double* accept_probability);

/* Clears exposure counters and the step count for one user. */
dmir_status dmir_env_reset(dmir_env* env, int32_t user);

dmir_status dmir_env_reseed(dmir_env* env, uint64_t seed);

void dmir_env_close(dmir_env* env);

/* ---------- world model ---------- */

dmir_status dmir_world_model_open(const char* checkpoint_path,
                                  dmir_world_model** out);
dmir_status dmir_world_model_save(const dmir_world_model* wm, const char* path);

/* Trains a fresh world model on the dataset's logged interactions and writes
 * the checkpoint; returns the model. config_json mirrors the train config
 * (lr, batch, dim, droprate, n_samples, seed, ...); `steps` overrides its
 * world-model step budget. curves_csv_path may be NULL. */
dmir_status dmir_pretrain(const dmir_dataset* ds, const char* config_json,
                          int32_t steps, const char* checkpoint_path,
                          const char* curves_csv_path, dmir_world_model** out);

/* Estimated probability that `user` accepts `item` next, given the user's
 * full logged history; the estimate marginalizes the latent context over
 * n_samples Monte-Carlo draws (1 uses the posterior mean). */
dmir_status dmir_world_model_predict(dmir_world_model* wm, const dmir_dataset* ds,
                                     int32_t user, int32_t item, int32_t n_samples,
                                     uint64_t seed, double* out);

void dmir_world_model_close(dmir_world_model* wm);

/* ---------- training, evaluation, recovery bench ---------- */

/* Full training run (world-model pretraining, then alternating policy /
 * world-model phases). Writes manifest.json, curves.csv, world_model.ckpt and
 * policy.ckpt under out_dir. config_json mirrors the train config. */
dmir_status dmir_train_run(const dmir_dataset* ds, const char* config_json,
                           const char* out_dir);

/* Trains and evaluates policy variants against the environment.
 * variants: comma-separated subset of
 *   dmir,dmir-d,dqn-naive-neg,dqn+wm,random.
 * options_json keys: ks (array), horizon, seeds, base_seed, train (object).
 * Writes report.json, report.csv, curves.csv under out_dir. */
dmir_status dmir_eval_run(const dmir_dataset* ds, const dmir_env* env,
                          const char* variants, const char* options_json,
                          const char* out_dir);

/* Synthetic latent-recovery bench; writes recovery.json. config_json keys:
 * n_u, n_c, regimes, users, horizon, n_items, model_dim, train_steps, lr,
 * batch, seeds, seed. */
dmir_status dmir_ident_bench_run(const char* config_json,
                                 const char* out_json_path);

/* Published full-scale reference numbers, for display only. */
const char* dmir_reference_results(void);

#ifdef __cplusplus
}
#endif

#endif /* DMIR_H */
