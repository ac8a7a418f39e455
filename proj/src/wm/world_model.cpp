#include "world_model.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "core/checkpoint.hpp"

namespace dmir {

using nlohmann::json;

std::array<double, 3> pop_features(const std::vector<double>& z, int item) {
    if (item < 0 || std::size_t(item) >= z.size())
        throw std::out_of_range("pop_features: item out of range");
    double mean = 0.0, entropy = 0.0;
    for (double v : z) {
        mean += v;
        if (v > 0) entropy -= v * std::log(v);
    }
    mean /= double(z.size());
    double norm = z.size() > 1 ? std::log(double(z.size())) : 1.0;
    return {z[std::size_t(item)], mean, entropy / norm};
}

WmObs make_obs(const LoggedDataset& ds, int user, std::size_t idx) {
    const auto& rec = ds.by_user[std::size_t(user)][idx];
    int b = ds.bucket_of(rec.timestamp);
    WmObs obs;
    obs.item = rec.item;
    obs.feedback = rec.feedback;
    obs.neighbors = ds.neighbors(b, user);
    obs.pop = pop_features(ds.popularity.buckets[std::size_t(b)], rec.item);
    return obs;
}

namespace {

Rng make_init_rng(std::uint64_t seed) { return Rng(seed ^ 0x9e3779b97f4a7c15ULL); }

}  // namespace

WorldModel::WorldModel(const WorldModelConfig& cfg) : cfg_(cfg) {
    if (cfg.n_users <= 0 || cfg.n_items <= 0 || cfg.dim <= 1)
        throw std::invalid_argument("WorldModel: bad dimensions");
    std::size_t d = std::size_t(cfg.dim);
    Rng rng = make_init_rng(cfg.seed);
    item_emb_ = Parameter("wm.item_emb",
                          init_uniform({std::size_t(cfg.n_items), d}, d, rng));
    user_emb_ = Parameter("wm.user_emb",
                          init_uniform({std::size_t(cfg.n_users), d}, d, rng));
    null_neighbor_ = Parameter("wm.null_neighbor", init_uniform({d}, d, rng));

    attn_s_ = SelfAttention("wm.fs.attn", d, rng);
    ffn_s_ = FeedForward("wm.fs.ffn", d, d, rng);
    pop_proj_s_ = Linear("wm.fs.pop", 3, d, rng);
    gru_s_ = GruCell("wm.fs.gru", 3 * d, d, rng);
    out_s_ = Linear("wm.fs.out", d, d, rng);
    ln_s_ = LayerNorm("wm.fs.ln", d);

    attn_c_ = SelfAttention("wm.fc.attn", d, rng);
    ffn_c_ = FeedForward("wm.fc.ffn", d, d, rng);
    pop_proj_c_ = Linear("wm.fc.pop", 3, d, rng);
    trunk_c_ = Linear("wm.fc.trunk", 4 * d + 1, d, rng);
    mu_head_ = Linear("wm.fc.mu", d, d, rng);
    sigma_head_ = Linear("wm.fc.sigma", d, d, rng);

    pop_proj_y_ = Linear("wm.fy.pop", 3, d, rng);
    hidden_y_ = Linear("wm.fy.hidden", 4 * d, d, rng);
    logit_y_ = Linear("wm.fy.logit", d, 1, rng);
}

Tape::NodeId WorldModel::neighbor_summary_node(Tape& t, const std::vector<int>& neighbors,
                                               SelfAttention& attn, FeedForward& ffn,
                                               bool train, Rng& rng) {
    Tape::NodeId seq;
    if (neighbors.empty()) {
        seq = t.as_row(t.param(null_neighbor_));
    } else {
        std::vector<std::size_t> idx;
        idx.reserve(neighbors.size());
        for (int nb : neighbors) idx.push_back(std::size_t(nb));
        seq = t.gather_rows(t.param(user_emb_), std::move(idx));
    }
    auto pooled = t.mean_rows(ffn.apply_rows(t, attn.apply(t, seq)));
    return t.dropout(pooled, cfg_.droprate, rng, train);
}

Tape::NodeId WorldModel::state_update_node(Tape& t, Tape::NodeId prev_state,
                                           const WmObs& obs, bool train, Rng& rng) {
    if (t.value(prev_state).size() != std::size_t(cfg_.dim))
        throw std::invalid_argument("state_update: prev state dimension mismatch");
    auto social = neighbor_summary_node(t, obs.neighbors, attn_s_, ffn_s_, train, rng);
    auto item = t.row(t.param(item_emb_), std::size_t(obs.item));
    auto pop = pop_proj_s_.apply(
        t, t.leaf(Tensor::vec({obs.pop[0], obs.pop[1], obs.pop[2]}), "pop"));
    auto input = t.concat({social, item, pop});
    auto h = gru_s_.apply(t, input, prev_state);
    return ln_s_.apply(t, out_s_.apply(t, h));
}

WorldModel::PosteriorNodes WorldModel::context_encode_node(Tape& t, const WmObs& prev_obs,
                                                           Tape::NodeId prev_state,
                                                           double delta, bool train,
                                                           Rng& rng) {
    auto social = neighbor_summary_node(t, prev_obs.neighbors, attn_c_, ffn_c_, train, rng);
    auto item = t.row(t.param(item_emb_), std::size_t(prev_obs.item));
    auto pop = pop_proj_c_.apply(
        t, t.leaf(Tensor::vec({prev_obs.pop[0], prev_obs.pop[1], prev_obs.pop[2]}), "pop"));
    auto fb = t.leaf(Tensor::vec({double(prev_obs.feedback)}), "feedback");
    auto trunk = t.tanh_(trunk_c_.apply(t, t.concat({social, item, pop, prev_state, fb})));
    PosteriorNodes out;
    out.mu = mu_head_.apply(t, trunk);
    auto raw = sigma_head_.apply(t, trunk);
    out.sigma = t.add(t.softplus(raw),
                      t.leaf(Tensor::full({std::size_t(cfg_.dim)}, cfg_.sigma_floor)));
    // Reparameterization: sample = mu + delta * sigma.
    out.sample = t.add(out.mu, t.scale(out.sigma, delta));
    return out;
}

Tape::NodeId WorldModel::feedback_logit_node(Tape& t, const WmObs& obs, Tape::NodeId state,
                                             Tape::NodeId context_or_zero, bool train,
                                             Rng& rng) {
    auto item = t.row(t.param(item_emb_), std::size_t(obs.item));
    auto pop = pop_proj_y_.apply(
        t, t.leaf(Tensor::vec({obs.pop[0], obs.pop[1], obs.pop[2]}), "pop"));
    auto h = t.relu(hidden_y_.apply(t, t.concat({pop, item, state, context_or_zero})));
    h = t.dropout(h, cfg_.droprate, rng, train);
    return t.sum(logit_y_.apply(t, h));
}

Tensor WorldModel::user_state(const Tensor& prev, const WmObs& obs) {
    Tape t;
    Rng no_drop(0);
    auto out = state_update_node(t, t.leaf(prev), obs, false, no_drop);
    return t.value(out);
}

std::vector<Tensor> WorldModel::fold_states(const std::vector<WmObs>& history) {
    std::vector<Tensor> states;
    states.reserve(history.size());
    Tensor s = zero_state();
    for (const auto& obs : history) {
        s = user_state(s, obs);
        states.push_back(s);
    }
    return states;
}

double WorldModel::predict_feedback(const WmObs& obs, const Tensor& state,
                                    const Tensor& context) {
    Tape t;
    Rng no_drop(0);
    auto logit = feedback_logit_node(t, obs, t.leaf(state), t.leaf(context), false, no_drop);
    double l = t.value(logit).data[0];
    return 1.0 / (1.0 + std::exp(-l));
}

Tape::NodeId WorldModel::elbo_loss_node(Tape& t, const std::vector<ElboSample>& batch,
                                        bool train, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("elbo_loss: empty batch");
    Tape::NodeId total = t.leaf(Tensor::scalar(0.0));
    for (const auto& s : batch) {
        auto prev_state = t.leaf(s.prev_state, "prev_state");
        double delta = train ? rng.normal() : 0.0;
        auto post = context_encode_node(t, s.prev, prev_state, delta, train, rng);
        // The user-state posterior is a delta distribution, so its KL term
        // vanishes; the context KL is the only divergence in the objective.
        auto kl = t.gaussian_kl(post.mu, post.sigma);
        auto cur_state = state_update_node(t, prev_state, s.cur, train, rng);
        auto nll_cur = t.bce_logits(
            feedback_logit_node(t, s.cur, cur_state, post.sample, train, rng),
            double(s.cur.feedback));
        auto zero_ctx = t.leaf(zero_state(), "zero_context");
        auto nll_prev = t.bce_logits(
            feedback_logit_node(t, s.prev, prev_state, zero_ctx, train, rng),
            double(s.prev.feedback));
        total = t.add(total, t.add(kl, t.add(nll_cur, nll_prev)));
    }
    return t.scale(total, 1.0 / double(batch.size()));
}

double WorldModel::elbo_loss(const std::vector<ElboSample>& batch) {
    Tape t;
    Rng no_drop(0);
    return t.value(elbo_loss_node(t, batch, false, no_drop)).data[0];
}

double WorldModel::debiased_feedback(const std::vector<WmObs>& history, int item,
                                     const std::array<double, 3>& pop, int n_samples,
                                     Rng& rng) {
    auto states = fold_states(history);
    return debiased_feedback_given(states.empty() ? zero_state() : states.back(),
                                   history.empty() ? nullptr : &history.back(), item,
                                   pop, n_samples, rng);
}

double WorldModel::debiased_feedback_given(const Tensor& prev_state, const WmObs* last_obs,
                                           int item, const std::array<double, 3>& pop,
                                           int n_samples, Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("debiased_feedback: n_samples >= 1");
    // Term (ii): s_t^u from the recursive state network (delta posterior).
    WmObs proposal;
    proposal.item = item;
    proposal.pop = pop;
    if (last_obs) proposal.neighbors = last_obs->neighbors;
    Tensor cur_state = user_state(prev_state, proposal);

    // Term (iii): context posterior from the t-1 window (prior if no history).
    Tensor mu, sigma;
    if (!last_obs) {
        mu = zero_state();
        sigma = Tensor::full({std::size_t(cfg_.dim)}, 1.0);
    } else {
        Tape t;
        Rng no_drop(0);
        auto post = context_encode_node(t, *last_obs, t.leaf(prev_state), 0.0,
                                        false, no_drop);
        mu = t.value(post.mu);
        sigma = t.value(post.sigma);
    }

    // Term (i) averaged over context samples.
    double acc = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        double delta = n_samples == 1 ? 0.0 : rng.normal();
        Tensor ctx = mu;
        for (std::size_t i = 0; i < ctx.size(); ++i) ctx.data[i] += delta * sigma.data[i];
        acc += predict_feedback(proposal, cur_state, ctx);
    }
    return acc / double(n_samples);
}

std::vector<Parameter*> WorldModel::params() {
    std::vector<Parameter*> out = {&item_emb_, &user_emb_, &null_neighbor_};
    for (auto* group : {&attn_s_, &attn_c_})
        for (auto* p : group->params()) out.push_back(p);
    for (auto* group : {&ffn_s_, &ffn_c_})
        for (auto* p : group->params()) out.push_back(p);
    for (auto* lin : {&pop_proj_s_, &out_s_, &pop_proj_c_, &trunk_c_, &mu_head_,
                      &sigma_head_, &pop_proj_y_, &hidden_y_, &logit_y_})
        for (auto* p : lin->params()) out.push_back(p);
    for (auto* p : gru_s_.params()) out.push_back(p);
    for (auto* p : ln_s_.params()) out.push_back(p);
    return out;
}

void WorldModel::save(const std::string& path) const {
    json meta;
    meta["kind"] = "world_model";
    meta["dim"] = cfg_.dim;
    meta["n_users"] = cfg_.n_users;
    meta["n_items"] = cfg_.n_items;
    meta["droprate"] = cfg_.droprate;
    meta["sigma_floor"] = cfg_.sigma_floor;
    meta["n_samples"] = cfg_.n_samples;
    meta["seed"] = cfg_.seed;
    checkpoint::save(path, meta.dump(), const_cast<WorldModel*>(this)->params());
}

WorldModel WorldModel::load(const std::string& path) {
    json meta = json::parse(checkpoint::read_meta(path));
    if (meta.value("kind", "") != "world_model")
        throw std::runtime_error("world model load: wrong checkpoint kind");
    WorldModelConfig cfg;
    cfg.dim = meta["dim"];
    cfg.n_users = meta["n_users"];
    cfg.n_items = meta["n_items"];
    cfg.droprate = meta["droprate"];
    cfg.sigma_floor = meta["sigma_floor"];
    cfg.n_samples = meta["n_samples"];
    cfg.seed = meta["seed"];
    WorldModel wm(cfg);
    checkpoint::load(path, wm.params());
    return wm;
}

}  // namespace dmir
