#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/dataset.hpp"

namespace dmir {

struct StepResult {
    int feedback = 0;
    double accept_probability = 0.0;
};

struct EnvFitOptions {
    int rank = 16;
    int epochs = 30;
    double lr = 0.05;
    int negatives_per_positive = 4;
    double alpha = 0.9;      // interest decay per repeated exposure
    int horizon = 32;        // steps per episode
    std::uint64_t seed = 0;
};

/// Simulated evaluation environment: logistic matrix-factorization ground
/// truth with multiplicative interest decay on repeated exposures.
class GroundTruthEnv {
public:
    GroundTruthEnv() = default;

    static GroundTruthEnv fit(const LoggedDataset& train, const EnvFitOptions& opt);

    /// Blank environment with zero embeddings; embeddings can be set directly.
    static GroundTruthEnv make(int n_users, int n_items, int rank, double alpha,
                               int horizon, std::uint64_t seed);

    /// sigmoid(u.a) * alpha^c without mutating the exposure counter.
    double accept_probability(int user, int item) const;

    /// Samples feedback, then increments the exposure counter.
    StepResult step(int user, int item);

    /// Clears exposure counters and the episode step count for one user.
    void reset(int user);
    void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

    double base_probability(int user, int item) const;  // c = 0 value
    int exposure_count(int user, int item) const;
    int steps_taken(int user) const;

    int n_users() const { return n_users_; }
    int n_items() const { return n_items_; }
    int rank() const { return rank_; }
    double alpha() const { return alpha_; }
    int horizon() const { return horizon_; }

    void save(const std::string& dir) const;
    static GroundTruthEnv load(const std::string& dir);

    /// Held-out AUC of the fitted factorization; diagnostic only.
    double fit_auc() const { return fit_auc_; }

    std::vector<double>& user_embeddings() { return user_emb_; }
    std::vector<double>& item_embeddings() { return item_emb_; }

private:
    void check_ids(int user, int item) const;

    int n_users_ = 0, n_items_ = 0, rank_ = 0, horizon_ = 32;
    double alpha_ = 0.9;
    double fit_auc_ = 0.0;
    std::uint64_t seed_ = 0;
    std::vector<double> user_emb_;  // n_users x rank, row-major
    std::vector<double> item_emb_;  // n_items x rank
    std::map<std::pair<int, int>, int> exposure_;
    std::map<int, int> episode_steps_;
    Rng rng_;
};

}  // namespace dmir
