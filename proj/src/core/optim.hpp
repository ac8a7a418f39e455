#pragma once

#include <unordered_map>
#include <vector>

#include "tape.hpp"

namespace dmir {

/// Adam with bias correction. State is keyed by parameter pointer.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Parameter*>& params);
    static void zero_grad(const std::vector<Parameter*>& params) {
        for (auto* p : params) p->zero_grad();
    }

    long long steps_taken() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    struct Moments {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::unordered_map<Parameter*, Moments> state_;
};

}  // namespace dmir
