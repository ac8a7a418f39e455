#pragma once

#include <cstdint>
#include <vector>

#include "data/dataset.hpp"
#include "wm/world_model.hpp"

namespace dmir {

/// Knobs for sampling a logged dataset from an existing world model: the
/// model plays the environment, a uniform-random policy picks the items.
struct ModelDataOptions {
    int users = 30;
    int items = 20;
    int horizon = 40;
    int n_buckets = 8;
    int neighbors_per_user = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ModelGeneratedData {
    LoggedDataset dataset;
    std::vector<TrustEdge> edges;
    IngestOptions options;
};

/// Multiplies the feedback-head output layer by `factor`. A freshly
/// initialized model predicts probabilities near 1/2 everywhere; scaling the
/// head spreads them out so the sampled labels carry learnable structure.
void sharpen_feedback_head(WorldModel& wm, double factor);

/// Rolls `teacher` forward per user with uniform-random recommendations and
/// Bernoulli feedback from its own predictions. The teacher must cover at
/// least opt.users users and opt.items items.
ModelGeneratedData make_model_generated_data(WorldModel& teacher,
                                             const ModelDataOptions& opt);

/// Mean negative log-likelihood of the feedback of every event whose
/// per-user index is at or past `from_frac` of the user's sequence,
/// conditioned on the full prefix. Deterministic (posterior-mean context).
double heldout_nll(WorldModel& wm, const LoggedDataset& ds, double from_frac);

}  // namespace dmir
