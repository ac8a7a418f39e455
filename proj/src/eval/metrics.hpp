#pragma once

#include <cstdint>
#include <vector>

namespace dmir {

struct EpisodeStep {
    int item = 0;
    double accept_probability = 0.0;
    int feedback = 0;
};

/// One evaluated episode: the ordered recommendations with outcomes.
struct EpisodeLog {
    int user = 0;
    std::uint64_t seed = 0;
    std::vector<EpisodeStep> steps;
};

/// Fraction of accepted recommendations within the first K steps, averaged
/// over episodes. Online interaction protocol: positions are turn indices.
double hr_at_k(const std::vector<EpisodeLog>& logs, int k);

/// DCG@K with gain = feedback and discount 1/log2(pos+1), normalized by the
/// ideal DCG for the episode's hit count. Zero-hit episodes contribute 0.
double ndcg_at_k(const std::vector<EpisodeLog>& logs, int k);

/// Distinct items recommended / total recommendations, averaged.
double diversity(const std::vector<EpisodeLog>& logs);

/// Harmonic mean of hit ratio and diversity; 0 when both are 0.
double f_measure(double hr, double div);

/// Mean cumulative (accepted-feedback) reward per episode.
double mean_cumulative_reward(const std::vector<EpisodeLog>& logs);

}  // namespace dmir
