#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "core/checkpoint.hpp"

namespace dmir {

using nlohmann::json;

SplitSequence split_sequence(const std::vector<std::pair<int, int>>& history,
                             int memory_size) {
    if (memory_size < 0) throw std::invalid_argument("split_sequence: negative memory");
    std::size_t keep = std::min(history.size(), std::size_t(memory_size));
    SplitSequence out;
    out.positive.reserve(keep);
    out.negative.reserve(keep);
    for (std::size_t i = history.size() - keep; i < history.size(); ++i) {
        const auto& [item, feedback] = history[i];
        out.positive.push_back(feedback ? item : EMPTY_SLOT);
        out.negative.push_back(feedback ? EMPTY_SLOT : item);
    }
    return out;
}

void ReplayBuffer::push(Transition t) {
    if (capacity_ == 0) return;
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    if (batch > data_.size())
        throw std::invalid_argument("replay sample: batch larger than buffer");
    // Partial Fisher-Yates over an index vector: without replacement.
    std::vector<std::size_t> idx(data_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        std::size_t j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(data_[idx[i]]);
    }
    return out;
}

void ReplayBuffer::clear() {
    data_.clear();
    next_ = 0;
}

Policy::Policy(const PolicyConfig& cfg) : cfg_(cfg) {
    if (cfg.n_items <= 0 || cfg.dim <= 0)
        throw std::invalid_argument("Policy: bad dimensions");
    std::size_t d = std::size_t(cfg.dim);
    Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
    item_emb_ = Parameter("policy.item_emb",
                          init_uniform({std::size_t(cfg.n_items), d}, d, rng));
    null_emb_ = Parameter("policy.null_emb", init_uniform({d}, d, rng));
    gru_ = GruCell("policy.gru", d, d, rng);
}

Tape::NodeId Policy::run_gru_node(Tape& t, const std::vector<int>& slots) {
    auto h = t.leaf(Tensor::zeros({std::size_t(cfg_.dim)}), "h0");
    auto table = t.param(item_emb_);
    for (int slot : slots) {
        auto x = slot == EMPTY_SLOT ? t.param(null_emb_)
                                    : t.row(table, std::size_t(slot));
        h = gru_.apply(t, x, h);
    }
    return h;
}

Tensor Policy::run_gru(const std::vector<int>& slots) {
    Tape t;
    return t.value(run_gru_node(t, slots));
}

Policy::StateNodes Policy::encode_state_node(Tape& t, const SplitSequence& split) {
    StateNodes out;
    if (cfg_.contrastive) {
        out.o_plus = run_gru_node(t, split.positive);
        out.o_minus = run_gru_node(t, split.negative);
    } else {
        // Full-sequence variant: one pass over all events in original order.
        std::vector<int> merged(split.positive.size());
        for (std::size_t i = 0; i < merged.size(); ++i)
            merged[i] = split.positive[i] != EMPTY_SLOT ? split.positive[i]
                                                        : split.negative[i];
        out.o_plus = run_gru_node(t, merged);
        out.o_minus = t.leaf(Tensor::zeros({std::size_t(cfg_.dim)}), "zero");
    }
    out.o = t.sub(out.o_plus, out.o_minus);
    return out;
}

PolicyState Policy::encode_state(const SplitSequence& split) {
    Tape t;
    auto nodes = encode_state_node(t, split);
    return {t.value(nodes.o_plus), t.value(nodes.o_minus), t.value(nodes.o)};
}

double Policy::q_logit(const Tensor& o, int item) const {
    if (item < 0 || item >= cfg_.n_items) throw std::out_of_range("q: bad item id");
    std::size_t d = std::size_t(cfg_.dim);
    double s = 0;
    for (std::size_t i = 0; i < d; ++i)
        s += item_emb_.value.data[std::size_t(item) * d + i] * o.data[i];
    return s;
}

double Policy::q_value(const Tensor& o, int item, bool* clamped) const {
    double logit = q_logit(o, item);
    bool over = logit > 700.0;
    if (clamped) *clamped = over;
    return std::exp(over ? 700.0 : logit);
}

int Policy::select_action(const Tensor& o, const std::vector<int>& candidates,
                          double epsilon, Rng& rng) const {
    if (candidates.empty()) throw std::invalid_argument("select_action: no candidates");
    if (rng.uniform() < epsilon) return candidates[rng.index(candidates.size())];
    // exp is monotone, so the greedy action maximizes the logit a.o.
    int best = candidates[0];
    double best_logit = q_logit(o, best);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        double l = q_logit(o, candidates[i]);
        if (l > best_logit || (l == best_logit && candidates[i] < best)) {
            best = candidates[i];
            best_logit = l;
        }
    }
    return best;
}

Tape::NodeId Policy::td_loss_node(Tape& t, const std::vector<Transition>& batch,
                                  Policy& target, double gamma, bool double_dqn) {
    if (batch.empty()) throw std::invalid_argument("td_loss: empty batch");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("td_loss: need 0 <= gamma < 1");
    auto total = t.leaf(Tensor::scalar(0.0));
    for (const auto& tr : batch) {
        // Target r_t is a constant: no gradient flows into the target net.
        double r = tr.reward;
        if (!tr.done) {
            Tensor next_o = target.encode_state(tr.next_state).o;
            int best = 0;
            if (double_dqn) {
                Tensor next_online = encode_state(tr.next_state).o;
                double best_l = q_logit(next_online, 0);
                for (int a = 1; a < cfg_.n_items; ++a) {
                    double l = q_logit(next_online, a);
                    if (l > best_l) {
                        best_l = l;
                        best = a;
                    }
                }
            } else {
                double best_l = target.q_logit(next_o, 0);
                for (int a = 1; a < target.cfg_.n_items; ++a) {
                    double l = target.q_logit(next_o, a);
                    if (l > best_l) {
                        best_l = l;
                        best = a;
                    }
                }
            }
            r += gamma * target.q_value(next_o, best);
        }
        auto state = encode_state_node(t, tr.state);
        auto a_emb = t.row(t.param(item_emb_), std::size_t(tr.action));
        auto q = t.exp_(t.dot(a_emb, state.o));
        auto err = t.sub(t.leaf(Tensor::scalar(r)), q);
        total = t.add(total, t.mul(err, err));
    }
    return t.scale(total, 1.0 / double(batch.size()));
}

double Policy::td_loss(const std::vector<Transition>& batch, Policy& target, double gamma,
                       bool double_dqn) {
    Tape t;
    return t.value(td_loss_node(t, batch, target, gamma, double_dqn)).data[0];
}

void Policy::sync_from(Policy& src) {
    auto dst = params();
    auto from = src.params();
    if (dst.size() != from.size()) throw std::runtime_error("sync: parameter mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!dst[i]->value.same_shape(from[i]->value))
            throw std::runtime_error("sync: shape mismatch for " + dst[i]->id);
        dst[i]->value = from[i]->value;
    }
}

std::vector<Parameter*> Policy::params() {
    std::vector<Parameter*> out = {&item_emb_, &null_emb_};
    for (auto* p : gru_.params()) out.push_back(p);
    return out;
}

void Policy::save(const std::string& path) const {
    json meta;
    meta["kind"] = "policy";
    meta["dim"] = cfg_.dim;
    meta["n_items"] = cfg_.n_items;
    meta["memory_size"] = cfg_.memory_size;
    meta["contrastive"] = cfg_.contrastive;
    meta["seed"] = cfg_.seed;
    checkpoint::save(path, meta.dump(), const_cast<Policy*>(this)->params());
}

Policy Policy::load(const std::string& path) {
    json meta = json::parse(checkpoint::read_meta(path));
    if (meta.value("kind", "") != "policy")
        throw std::runtime_error("policy load: wrong checkpoint kind");
    PolicyConfig cfg;
    cfg.dim = meta["dim"];
    cfg.n_items = meta["n_items"];
    cfg.memory_size = meta["memory_size"];
    cfg.contrastive = meta["contrastive"];
    cfg.seed = meta["seed"];
    Policy p(cfg);
    checkpoint::load(path, p.params());
    return p;
}

std::pair<double, double> contrastive_identity_check(const Tensor& a,
                                                     const Tensor& o_plus,
                                                     const Tensor& o_minus) {
    double qp = 0, qn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        qp += a.data[i] * o_plus.data[i];
        qn += a.data[i] * o_minus.data[i];
    }
    double lhs = std::log1p(std::exp(-(qp - qn)));        // -log sigmoid(qp - qn)
    double rhs = std::log(std::exp(qp) + std::exp(qn)) - qp;  // -log softmax
    return {lhs, rhs};
}

double epsilon_at(int episode, int total_episodes, double eps_start) {
    const double eps_end = 0.05;
    double span = 0.8 * double(total_episodes);
    if (span <= 0.0 || double(episode) >= span) return eps_end;
    double frac = double(episode) / span;
    return eps_start + (eps_end - eps_start) * frac;
}

}  // namespace dmir
