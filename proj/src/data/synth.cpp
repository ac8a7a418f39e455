#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "core/rng.hpp"

namespace dmir {

using nlohmann::json;

void SynthDataOptions::validate() const {
    if (users < 2 || items < 2 || rank < 1)
        throw std::invalid_argument("synth: users/items/rank too small");
    if (horizon < 1 || n_buckets < 1)
        throw std::invalid_argument("synth: horizon and n_buckets must be positive");
    if (neighbors_per_user < 0 || neighbors_per_user >= users)
        throw std::invalid_argument("synth: neighbors_per_user out of range");
    if (alpha <= 0.0 || alpha > 1.0)
        throw std::invalid_argument("synth: alpha must be in (0, 1]");
    if (embed_scale <= 0.0) throw std::invalid_argument("synth: embed_scale must be > 0");
    if (quality_scale < 0.0)
        throw std::invalid_argument("synth: quality_scale must be >= 0");
    if (repeat_prob < 0.0 || repeat_prob >= 1.0)
        throw std::invalid_argument("synth: repeat_prob must be in [0, 1)");
}

SynthDataOptions SynthDataOptions::from_json(const std::string& text) {
    json j = json::parse(text);
    SynthDataOptions o;
    o.users = j.value("users", o.users);
    o.items = j.value("items", o.items);
    o.rank = j.value("rank", o.rank);
    o.horizon = j.value("horizon", o.horizon);
    o.n_buckets = j.value("n_buckets", o.n_buckets);
    o.neighbors_per_user = j.value("neighbors_per_user", o.neighbors_per_user);
    o.alpha = j.value("alpha", o.alpha);
    o.embed_scale = j.value("embed_scale", o.embed_scale);
    o.quality_scale = j.value("quality_scale", o.quality_scale);
    o.repeat_prob = j.value("repeat_prob", o.repeat_prob);
    o.seed = j.value("seed", o.seed);
    o.validate();
    return o;
}

std::string SynthDataOptions::to_json() const {
    json j;
    j["users"] = users;
    j["items"] = items;
    j["rank"] = rank;
    j["horizon"] = horizon;
    j["n_buckets"] = n_buckets;
    j["neighbors_per_user"] = neighbors_per_user;
    j["alpha"] = alpha;
    j["embed_scale"] = embed_scale;
    j["quality_scale"] = quality_scale;
    j["repeat_prob"] = repeat_prob;
    j["seed"] = seed;
    return j.dump(2);
}

SynthData make_synthetic_data(const SynthDataOptions& opt) {
    opt.validate();
    Rng rng(opt.seed ^ 0xa5a5a5a55a5a5a5aULL);

    SynthData out;
    out.env = GroundTruthEnv::make(opt.users, opt.items, opt.rank, opt.alpha, opt.horizon,
                                   opt.seed + 1);
    for (auto& v : out.env.user_embeddings()) v = rng.normal() * opt.embed_scale;
    for (auto& v : out.env.item_embeddings()) v = rng.normal() * opt.embed_scale;
    // Coordinate 0 is a global item-quality channel (user side pinned to 1),
    // so acceptance rates vary across the catalog the way real ones do; the
    // remaining coordinates carry per-user taste.
    auto& ue = out.env.user_embeddings();
    auto& ie = out.env.item_embeddings();
    for (int u = 0; u < opt.users; ++u) ue[std::size_t(u) * std::size_t(opt.rank)] = 1.0;
    for (int i = 0; i < opt.items; ++i)
        ie[std::size_t(i) * std::size_t(opt.rank)] = rng.normal() * opt.quality_scale;

    for (int u = 0; u < opt.users; ++u) {
        std::vector<int> nb;
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
    // Feedback during logging is drawn from the decayed probability so that
    // the effect of re-showing an item is present in the data.
    std::vector<std::vector<int>> shown(std::size_t(opt.users));
    std::vector<std::vector<int>> exposures(std::size_t(opt.users));
    for (auto& e : exposures) e.assign(std::size_t(opt.items), 0);
    for (int t = 0; t < opt.horizon; ++t)
        for (int u = 0; u < opt.users; ++u) {
            auto& hist = shown[std::size_t(u)];
            int item;
            if (!hist.empty() && rng.bernoulli(opt.repeat_prob))
                item = hist[rng.index(hist.size())];
            else
                item = int(rng.index(std::size_t(opt.items)));
            int& count = exposures[std::size_t(u)][std::size_t(item)];
            double p = out.env.base_probability(u, item) *
                       std::pow(opt.alpha, double(count));
            ++count;
            hist.push_back(item);
            int y = rng.bernoulli(p) ? 1 : 0;
            parsed.records.push_back(
                {u, item, y, std::int64_t(t) * opt.users + u});
        }

    out.options.n_buckets = opt.n_buckets;
    out.dataset = build_dataset(std::move(parsed), out.edges, out.options);
    return out;
}

void save_synthetic_data(const SynthData& data, const std::string& dir) {
    save_dataset(data.dataset, data.edges, data.options, dir);
    data.env.save(dir + "/env");
}

}  // namespace dmir
