#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "wm/world_model.hpp"

namespace dmir {

struct IdentConfig {
    int n_u = 2;      // latent user-preference dimension (model dim = n_u)
    int n_c = 2;      // latent context dimension
    int regimes = 5;  // distinct social-graph regimes (>= 2*n_u + 1)
    int users = 80;
    int horizon = 40;  // T steps per user
    int n_items = 6;
    int model_dim = 8;  // world-model state width; must be >= n_u
    int train_steps = 3000;
    double lr = 0.01;
    int batch = 64;
    int seeds = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

/// One simulated dataset with its ground-truth latents retained.
struct SyntheticRollout {
    std::vector<std::vector<WmObs>> histories;          // [user][t]
    std::vector<std::vector<std::vector<double>>> s_u;  // [user][t][n_u]
    std::vector<std::vector<double>> s_c;               // [user][n_c]
    std::vector<std::vector<double>> probs;             // [user][t] true accept prob
    LoggedDataset dataset;
    double base_rate = 0.0;  // calibrated into [0.2, 0.8]
};

/// Ground-truth generative process: random mixing functions for the state
/// transition, reward head, popularity drift and cycling graph regimes.
/// Construction retries with a fresh seed if the reward head is degenerate.
class SyntheticProcess {
public:
    SyntheticProcess(const IdentConfig& cfg, std::uint64_t seed);

    /// Deterministic given rollout_seed; latents returned with the data.
    SyntheticRollout rollout(int users, int horizon, std::uint64_t rollout_seed) const;

    const IdentConfig& config() const { return cfg_; }

private:
    double reward_logit(const std::vector<double>& su, const std::vector<double>& sc,
                        int item, double pop_share) const;

    IdentConfig cfg_;
    std::vector<double> A_;                       // n_u x n_u state mixing
    std::vector<double> B_;                       // n_u x n_u regime mixing
    std::vector<std::vector<double>> regimes_;    // regime vectors, n_u each
    std::vector<std::vector<std::vector<int>>> regime_neighbors_;  // [regime][user]
    std::vector<double> item_u_;                  // n_items x n_u reward weights
    std::vector<double> item_c_;                  // n_items x n_c reward weights
    std::vector<std::vector<double>> user_context_;  // fixed s^c per user
    double w_pop_ = 0.0;
    double zeta_angle_ = 0.0;                     // popularity rotation speed
    std::vector<double> pop_proj_;                // n_items x 2 logit projection
};

/// Mean absolute Pearson correlation after the best one-to-one assignment of
/// true components onto estimated ones (exhaustive; true count <= 6, estimated
/// count may be larger since the model state can be wider than the latent).
/// Inputs are component-major: comps[k][sample]. Constant components
/// correlate as 0.
double mcc_assignment(const std::vector<std::vector<double>>& true_comps,
                      const std::vector<std::vector<double>>& est_comps);

/// 5-fold R^2 of predicting each true component from the estimated block via
/// a random-feature ridge regressor; averaged and clamped to [0, 1].
double block_r2(const std::vector<std::vector<double>>& est_rows,
                const std::vector<std::vector<double>>& true_rows, std::uint64_t seed);

struct RecoveryScores {
    double mcc_su = 0.0;
    double r2_sc = 0.0;
};

/// Estimates latents on held-out rollouts with the model's own encoders and
/// scores them against the retained ground truth.
RecoveryScores score_recovery(WorldModel& wm, const SyntheticRollout& heldout);

struct BenchSeedResult {
    std::uint64_t seed = 0;
    RecoveryScores trained, untrained;
};

struct BenchReport {
    IdentConfig config;
    std::vector<BenchSeedResult> per_seed;
    double mean_trained_mcc = 0.0, mean_untrained_mcc = 0.0;
    double mean_trained_r2 = 0.0, mean_untrained_r2 = 0.0;
};

/// Full bench: per seed, generate, train the world model on the synthetic
/// data, and score recovery against an untrained baseline.
BenchReport run_ident_bench(const IdentConfig& cfg);

void write_recovery(const BenchReport& report, const std::string& path);

}  // namespace dmir
