#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace dmir {

namespace {

void check_k(const std::vector<EpisodeLog>& logs, int k) {
    if (k <= 0) throw std::invalid_argument("metrics: K must be positive");
    for (const auto& log : logs)
        if (std::size_t(k) > log.steps.size())
            throw std::invalid_argument("metrics: K exceeds the episode horizon");
}

}  // namespace

double hr_at_k(const std::vector<EpisodeLog>& logs, int k) {
    check_k(logs, k);
    if (logs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& log : logs) {
        int hits = 0;
        for (int i = 0; i < k; ++i) hits += log.steps[std::size_t(i)].feedback;
        total += double(hits) / double(k);
    }
    return total / double(logs.size());
}

double ndcg_at_k(const std::vector<EpisodeLog>& logs, int k) {
    check_k(logs, k);
    if (logs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& log : logs) {
        double dcg = 0.0;
        int hits = 0;
        for (int i = 0; i < k; ++i) {
            if (log.steps[std::size_t(i)].feedback) {
                dcg += 1.0 / std::log2(double(i) + 2.0);  // position i+1
                ++hits;
            }
        }
        double idcg = 0.0;
        for (int i = 0; i < hits; ++i) idcg += 1.0 / std::log2(double(i) + 2.0);
        total += hits == 0 ? 0.0 : dcg / idcg;
    }
    return total / double(logs.size());
}

double diversity(const std::vector<EpisodeLog>& logs) {
    if (logs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& log : logs) {
        if (log.steps.empty()) continue;
        std::set<int> distinct;
        for (const auto& s : log.steps) distinct.insert(s.item);
        total += double(distinct.size()) / double(log.steps.size());
    }
    return total / double(logs.size());
}

double f_measure(double hr, double div) {
    if (hr < 0.0 || hr > 1.0 || div < 0.0 || div > 1.0)
        throw std::invalid_argument("f_measure: inputs must be in [0,1]");
    if (hr + div == 0.0) return 0.0;
    return 2.0 * hr * div / (hr + div);
}

double mean_cumulative_reward(const std::vector<EpisodeLog>& logs) {
    if (logs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& log : logs)
        for (const auto& s : log.steps) total += double(s.feedback);
    return total / double(logs.size());
}

}  // namespace dmir
