#include "optim.hpp"

#include <cmath>

namespace dmir {

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (Parameter* p : params) {
        auto it = state_.find(p);
        if (it == state_.end()) {
            it = state_.emplace(p, Moments{Tensor::zeros(p->value.shape),
                                           Tensor::zeros(p->value.shape)}).first;
        }
        Moments& mo = it->second;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad.data[i];
            mo.m.data[i] = beta1_ * mo.m.data[i] + (1.0 - beta1_) * g;
            mo.v.data[i] = beta2_ * mo.v.data[i] + (1.0 - beta2_) * g * g;
            double mhat = mo.m.data[i] / bc1;
            double vhat = mo.v.data[i] / bc2;
            p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace dmir
