#pragma once

#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "env/env.hpp"
#include "eval/metrics.hpp"
#include "train/trainer.hpp"

namespace dmir {

enum class EvalVariant {
    dmir,           // full training loop, contrastive policy
    dmir_d,         // no world model: policy TD-trained on logged transitions
    dqn_naive_neg,  // logged training with sampled unknown items as negatives
    dqn_wm,         // full-sequence GRU DQN given world-model rewards
    random_policy,  // uniform random baseline
};

EvalVariant variant_from_string(const std::string& s);
std::string to_string(EvalVariant v);

struct EvalOptions {
    std::vector<int> ks = {20, 50};  // clamped to the horizon when larger
    int horizon = 32;
    int seeds = 5;
    std::uint64_t base_seed = 0;
    TrainConfig train;  // per-seed training config; seed field is overridden
};

struct SeedMetrics {
    std::uint64_t seed = 0;
    std::vector<double> hr, ndcg;  // parallel to EvalOptions::ks
    double diversity = 0.0;
    double f = 0.0;
    double cum_reward = 0.0;
};

struct MetricReport {
    std::string variant;
    std::vector<int> ks;
    int horizon = 0;
    int n_users = 0;
    std::vector<SeedMetrics> per_seed;
    SeedMetrics mean;
    SeedMetrics stddev;  // population standard deviation over seeds
    /// Mean cumulative accepted-feedback reward after each step, averaged
    /// over users and seeds; non-decreasing.
    std::vector<double> reward_curve;
};

/// Trains the variant per seed, rolls greedy episodes for every user against
/// a copy of the environment, and aggregates the ranking metrics.
MetricReport run_eval(EvalVariant variant, const LoggedDataset& ds,
                      const GroundTruthEnv& env, const EvalOptions& opt);

/// Trains a policy for the variant (random returns an untrained one).
Policy train_variant(EvalVariant variant, const LoggedDataset& ds, TrainConfig cfg);

/// Rolls one greedy (or uniform-random) episode per user; returns the logs.
std::vector<EpisodeLog> roll_episodes(EvalVariant variant, Policy& policy,
                                      GroundTruthEnv env, int horizon,
                                      std::uint64_t seed, int memory_size);

/// Writes report.json, report.csv (one row per variant x seed) and
/// curves.csv (per-step cumulative reward) under `dir`.
void emit_report(const std::vector<MetricReport>& reports, const std::string& dir);

/// Published full-scale reference numbers, for context display only; desk
/// runs are not expected to reproduce them.
std::string reference_results();

}  // namespace dmir
