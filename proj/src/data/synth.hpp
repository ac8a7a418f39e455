#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "env/env.hpp"

namespace dmir {

/// Knobs for the self-contained synthetic benchmark set: a random logistic
/// matrix-factorization ground truth, a static random trust graph and logged
/// interactions sampled from uniform-random recommendations.
struct SynthDataOptions {
    int users = 50;
    int items = 100;
    int rank = 16;
    int horizon = 32;  // logged steps per user and episode length
    int n_buckets = 12;
    int neighbors_per_user = 4;
    double alpha = 0.99;       // interest decay of the environment
    double embed_scale = 0.5;    // stddev of ground-truth embedding entries
    double quality_scale = 1.5;  // stddev of the global item-quality channel
    // Chance that the logging policy re-shows an item the user has already
    // seen instead of drawing a fresh one. Repeats in the log are what make
    // the interest decay identifiable from the data.
    double repeat_prob = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
    static SynthDataOptions from_json(const std::string& text);
    std::string to_json() const;
};

struct SynthData {
    LoggedDataset dataset;
    std::vector<TrustEdge> edges;
    IngestOptions options;
    GroundTruthEnv env;
};

/// Deterministic for a fixed seed.
SynthData make_synthetic_data(const SynthDataOptions& opt);

/// Dataset files (interactions.csv, trust.csv, meta.json) under `dir`, the
/// generating environment under `dir`/env.
void save_synthetic_data(const SynthData& data, const std::string& dir);

}  // namespace dmir
