#include "env.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dmir {

using nlohmann::json;

namespace {

double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double dot_row(const std::vector<double>& a, std::size_t ra, const std::vector<double>& b,
               std::size_t rb, std::size_t k) {
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += a[ra * k + i] * b[rb * k + i];
    return s;
}

}  // namespace

GroundTruthEnv GroundTruthEnv::fit(const LoggedDataset& train, const EnvFitOptions& opt) {
    if (opt.rank < 1) throw std::invalid_argument("env fit: rank must be >= 1");
    if (train.n_records() == 0) throw std::runtime_error("env fit: empty dataset");

    GroundTruthEnv env;
    env.n_users_ = train.n_users;
    env.n_items_ = train.n_items;
    env.rank_ = opt.rank;
    env.alpha_ = opt.alpha;
    env.horizon_ = opt.horizon;
    env.seed_ = opt.seed;
    env.rng_ = Rng(opt.seed);

    Rng rng(opt.seed);
    std::size_t k = std::size_t(opt.rank);
    double bound = 1.0 / std::sqrt(double(k));
    env.user_emb_.resize(std::size_t(train.n_users) * k);
    env.item_emb_.resize(std::size_t(train.n_items) * k);
    for (auto& v : env.user_emb_) v = rng.uniform(-bound, bound);
    for (auto& v : env.item_emb_) v = rng.uniform(-bound, bound);

    // Flatten and hold out 10% for AUC.
    std::vector<InteractionRecord> records;
    for (const auto& v : train.by_user) records.insert(records.end(), v.begin(), v.end());
    std::shuffle(records.begin(), records.end(), rng.engine());
    std::size_t held = std::max<std::size_t>(1, records.size() / 10);
    std::vector<InteractionRecord> heldout(records.end() - long(held), records.end());
    records.resize(records.size() - held);
    if (records.empty()) {
        records = heldout;  // tiny datasets train on everything
    }

    // Logistic MF by SGD: positives from logged y=1, plus the logged y=0
    // events and uniform sampled negatives per positive.
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(records.begin(), records.end(), rng.engine());
        for (const auto& r : records) {
            auto sgd = [&](int user, int item, double label) {
                std::size_t u = std::size_t(user), a = std::size_t(item);
                double p = sigmoid(dot_row(env.user_emb_, u, env.item_emb_, a, k));
                double g = p - label;
                for (std::size_t i = 0; i < k; ++i) {
                    double ue = env.user_emb_[u * k + i];
                    double ie = env.item_emb_[a * k + i];
                    env.user_emb_[u * k + i] -= opt.lr * g * ie;
                    env.item_emb_[a * k + i] -= opt.lr * g * ue;
                }
            };
            sgd(r.user, r.item, double(r.feedback));
            if (r.feedback == 1) {
                for (int n = 0; n < opt.negatives_per_positive; ++n)
                    sgd(r.user, int(rng.index(std::size_t(train.n_items))), 0.0);
            }
        }
    }

    // Held-out AUC over (positive, negative) pairs.
    std::vector<double> pos, neg;
    for (const auto& r : heldout) {
        double s = dot_row(env.user_emb_, std::size_t(r.user), env.item_emb_,
                           std::size_t(r.item), k);
        (r.feedback ? pos : neg).push_back(s);
    }
    if (!pos.empty() && !neg.empty()) {
        double wins = 0;
        for (double p : pos)
            for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
        env.fit_auc_ = wins / (double(pos.size()) * double(neg.size()));
    } else {
        env.fit_auc_ = 0.5;
    }
    return env;
}

GroundTruthEnv GroundTruthEnv::make(int n_users, int n_items, int rank, double alpha,
                                    int horizon, std::uint64_t seed) {
    GroundTruthEnv env;
    env.n_users_ = n_users;
    env.n_items_ = n_items;
    env.rank_ = rank;
    env.alpha_ = alpha;
    env.horizon_ = horizon;
    env.seed_ = seed;
    env.rng_ = Rng(seed);
    env.user_emb_.assign(std::size_t(n_users) * std::size_t(rank), 0.0);
    env.item_emb_.assign(std::size_t(n_items) * std::size_t(rank), 0.0);
    return env;
}

void GroundTruthEnv::check_ids(int user, int item) const {
    if (user < 0 || user >= n_users_ || item < 0 || item >= n_items_)
        throw std::out_of_range("env: unknown user or item id");
}

double GroundTruthEnv::base_probability(int user, int item) const {
    check_ids(user, item);
    return sigmoid(dot_row(user_emb_, std::size_t(user), item_emb_, std::size_t(item),
                           std::size_t(rank_)));
}

double GroundTruthEnv::accept_probability(int user, int item) const {
    check_ids(user, item);
    double p = base_probability(user, item);
    auto it = exposure_.find({user, item});
    int c = it == exposure_.end() ? 0 : it->second;
    return p * std::pow(alpha_, double(c));
}

StepResult GroundTruthEnv::step(int user, int item) {
    check_ids(user, item);
    int& steps = episode_steps_[user];
    if (steps >= horizon_)
        throw std::runtime_error("env: episode over (horizon reached); reset first");
    StepResult res;
    res.accept_probability = accept_probability(user, item);
    res.feedback = rng_.bernoulli(res.accept_probability) ? 1 : 0;
    ++exposure_[{user, item}];
    ++steps;
    return res;
}

void GroundTruthEnv::reset(int user) {
    auto it = exposure_.lower_bound({user, 0});
    while (it != exposure_.end() && it->first.first == user) it = exposure_.erase(it);
    episode_steps_[user] = 0;
}

int GroundTruthEnv::exposure_count(int user, int item) const {
    auto it = exposure_.find({user, item});
    return it == exposure_.end() ? 0 : it->second;
}

int GroundTruthEnv::steps_taken(int user) const {
    auto it = episode_steps_.find(user);
    return it == episode_steps_.end() ? 0 : it->second;
}

void GroundTruthEnv::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    json meta;
    meta["n_users"] = n_users_;
    meta["n_items"] = n_items_;
    meta["rank"] = rank_;
    meta["alpha"] = alpha_;
    meta["horizon"] = horizon_;
    meta["seed"] = seed_;
    meta["fit_auc"] = fit_auc_;
    std::ofstream ms(dir + "/env.json");
    if (!ms) throw std::runtime_error("env save: cannot write " + dir + "/env.json");
    ms << meta.dump(2) << '\n';
    std::ofstream es(dir + "/embeddings.bin", std::ios::binary);
    es.write(reinterpret_cast<const char*>(user_emb_.data()),
             std::streamsize(user_emb_.size() * sizeof(double)));
    es.write(reinterpret_cast<const char*>(item_emb_.data()),
             std::streamsize(item_emb_.size() * sizeof(double)));
    if (!es) throw std::runtime_error("env save: write failed");
}

GroundTruthEnv GroundTruthEnv::load(const std::string& dir) {
    std::ifstream ms(dir + "/env.json");
    if (!ms) throw std::runtime_error("env load: cannot open " + dir + "/env.json");
    json meta = json::parse(ms);
    GroundTruthEnv env;
    env.n_users_ = meta["n_users"];
    env.n_items_ = meta["n_items"];
    env.rank_ = meta["rank"];
    env.alpha_ = meta["alpha"];
    env.horizon_ = meta["horizon"];
    env.seed_ = meta["seed"];
    env.fit_auc_ = meta["fit_auc"];
    env.rng_ = Rng(env.seed_);
    std::size_t k = std::size_t(env.rank_);
    env.user_emb_.resize(std::size_t(env.n_users_) * k);
    env.item_emb_.resize(std::size_t(env.n_items_) * k);
    std::ifstream es(dir + "/embeddings.bin", std::ios::binary);
    es.read(reinterpret_cast<char*>(env.user_emb_.data()),
            std::streamsize(env.user_emb_.size() * sizeof(double)));
    es.read(reinterpret_cast<char*>(env.item_emb_.data()),
            std::streamsize(env.item_emb_.size() * sizeof(double)));
    if (!es) throw std::runtime_error("env load: truncated embeddings.bin");
    return env;
}

}  // namespace dmir
