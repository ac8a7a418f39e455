#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core/tape.hpp"

namespace dmir::testutil {

/// Central finite differences against an analytic gradient over a parameter
/// set. `loss` must rebuild the graph from scratch on every call (the tape is
/// discarded between evaluations). Returns the maximum relative error over
/// all parameter entries.
inline double max_grad_rel_error(const std::vector<Parameter*>& params,
                                 const std::function<double(bool)>& loss_fwd_or_bwd,
                                 double step = 1e-5) {
    // Analytic pass.
    for (auto* p : params) p->zero_grad();
    loss_fwd_or_bwd(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double orig = p->value.data[i];
            p->value.data[i] = orig + step;
            double up = loss_fwd_or_bwd(false);
            p->value.data[i] = orig - step;
            double dn = loss_fwd_or_bwd(false);
            p->value.data[i] = orig;
            double fd = (up - dn) / (2.0 * step);
            double an = analytic[pi].data[i];
            // The floor keeps FD roundoff noise (~1e-11 absolute for an O(1)
            // loss) from dominating near-zero gradient entries.
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace dmir::testutil
