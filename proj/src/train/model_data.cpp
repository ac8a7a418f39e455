#include "model_data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "core/rng.hpp"

namespace dmir {

void ModelDataOptions::validate() const {
    if (users < 2 || items < 2)
        throw std::invalid_argument("model_data: users/items too small");
    if (horizon < 2 || n_buckets < 1)
        throw std::invalid_argument("model_data: horizon must be >= 2, n_buckets >= 1");
    if (neighbors_per_user < 0 || neighbors_per_user >= users)
        throw std::invalid_argument("model_data: neighbors_per_user out of range");
}

void sharpen_feedback_head(WorldModel& wm, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor))
        throw std::invalid_argument("sharpen: factor must be positive and finite");
    bool found = false;
    for (auto* p : wm.params())
        if (p->id.rfind("wm.fy.logit", 0) == 0) {
            for (auto& v : p->value.data) v *= factor;
            found = true;
        }
    if (!found) throw std::runtime_error("sharpen: feedback head parameters not found");
}

ModelGeneratedData make_model_generated_data(WorldModel& teacher,
                                             const ModelDataOptions& opt) {
    opt.validate();
    if (teacher.config().n_users < opt.users || teacher.config().n_items < opt.items)
        throw std::invalid_argument("model_data: teacher too small for requested sizes");
    Rng rng(opt.seed ^ 0x6c62272e07bb0142ULL);

    ModelGeneratedData out;
    std::vector<std::vector<int>> neighbor_of(std::size_t(opt.users));
    for (int u = 0; u < opt.users; ++u) {
        auto& nb = neighbor_of[std::size_t(u)];
        while (int(nb.size()) < opt.neighbors_per_user) {
            int cand = int(rng.index(std::size_t(opt.users)));
            if (cand != u && std::find(nb.begin(), nb.end(), cand) == nb.end())
                nb.push_back(cand);
        }
        for (int v : nb) out.edges.push_back({u, v, 0});
    }

    ParsedInteractions parsed;
    for (int u = 0; u < opt.users; ++u) parsed.user_id_map.push_back(u);
    for (int i = 0; i < opt.items; ++i) parsed.item_id_map.push_back(i);

    // Per-user rollout: the teacher is its own environment. Popularity
    // features are held at zero during generation; the rebuilt dataset
    // carries the usual computed ones.
    for (int u = 0; u < opt.users; ++u) {
        Tensor state = teacher.zero_state();
        WmObs last{};
        bool has_last = false;
        for (int t = 0; t < opt.horizon; ++t) {
            int item = int(rng.index(std::size_t(opt.items)));
            double p = teacher.debiased_feedback_given(
                state, has_last ? &last : nullptr, item, {0.0, 0.0, 0.0}, 1, rng);
            int y = rng.bernoulli(p) ? 1 : 0;
            WmObs obs;
            obs.item = item;
            obs.feedback = y;
            obs.neighbors = neighbor_of[std::size_t(u)];
            state = teacher.user_state(state, obs);
            last = obs;
            has_last = true;
            parsed.records.push_back({u, item, y, std::int64_t(t) * opt.users + u});
        }
    }

    out.options.n_buckets = opt.n_buckets;
    out.dataset = build_dataset(std::move(parsed), out.edges, out.options);
    return out;
}

double heldout_nll(WorldModel& wm, const LoggedDataset& ds, double from_frac) {
    if (from_frac < 0.0 || from_frac >= 1.0)
        throw std::invalid_argument("heldout_nll: from_frac must be in [0, 1)");
    Rng rng(0);  // unused for the deterministic single-sample estimate
    double total = 0.0;
    std::size_t count = 0;
    for (int u = 0; u < ds.n_users; ++u) {
        const auto& recs = ds.by_user[std::size_t(u)];
        if (recs.size() < 2) continue;
        std::vector<WmObs> history;
        history.reserve(recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) history.push_back(make_obs(ds, u, i));
        auto states = wm.fold_states(history);
        auto first = std::max<std::size_t>(
            1, std::size_t(std::ceil(from_frac * double(recs.size()))));
        for (std::size_t i = first; i < recs.size(); ++i) {
            double p = wm.debiased_feedback_given(states[i - 1], &history[i - 1],
                                                  history[i].item, history[i].pop, 1, rng);
            p = std::clamp(p, 1e-9, 1.0 - 1e-9);
            total -= history[i].feedback ? std::log(p) : std::log1p(-p);
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("heldout_nll: no events to score");
    return total / double(count);
}

}  // namespace dmir
