#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace dmir {

using nlohmann::ordered_json;

EvalVariant variant_from_string(const std::string& s) {
    if (s == "dmir") return EvalVariant::dmir;
    if (s == "dmir-d") return EvalVariant::dmir_d;
    if (s == "dqn-naive-neg") return EvalVariant::dqn_naive_neg;
    if (s == "dqn+wm") return EvalVariant::dqn_wm;
    if (s == "random") return EvalVariant::random_policy;
    throw std::invalid_argument("unknown eval variant: " + s);
}

std::string to_string(EvalVariant v) {
    switch (v) {
        case EvalVariant::dmir: return "dmir";
        case EvalVariant::dmir_d: return "dmir-d";
        case EvalVariant::dqn_naive_neg: return "dqn-naive-neg";
        case EvalVariant::dqn_wm: return "dqn+wm";
        case EvalVariant::random_policy: return "random";
    }
    throw std::invalid_argument("unknown eval variant");
}

namespace {

PolicyConfig policy_config(const LoggedDataset& ds, const TrainConfig& cfg,
                           bool contrastive) {
    PolicyConfig pc;
    pc.dim = cfg.dim;
    pc.n_items = ds.n_items;
    pc.memory_size = cfg.memory_size;
    pc.contrastive = contrastive;
    pc.seed = cfg.seed;
    return pc;
}

/// Simulation-trained variants: pretrain the world model, then alternate
/// collection and policy updates. Only the full variant finetunes the world
/// model inside the loop; the plugin mode keeps it frozen after pretraining.
Policy train_simulated(EvalVariant v, const LoggedDataset& ds, const TrainConfig& cfg) {
    Trainer tr(ds, cfg);
    WorldModelConfig wc;
    wc.dim = cfg.dim;
    wc.n_users = ds.n_users;
    wc.n_items = ds.n_items;
    wc.droprate = cfg.droprate;
    wc.n_samples = cfg.n_samples;
    wc.seed = cfg.seed;
    WorldModel wm(wc);
    Policy policy(policy_config(ds, cfg, v == EvalVariant::dmir));
    Policy target(policy.config());
    target.sync_from(policy);
    ReplayBuffer buffer(std::size_t(cfg.buffer));
    std::vector<int> users(std::size_t(ds.n_users));
    for (int u = 0; u < ds.n_users; ++u) users[std::size_t(u)] = u;

    std::vector<CurvePoint> curves;
    Rng rng(cfg.seed ^ 0xa0761d6478bd642fULL);
    tr.pretrain_world_model(wm, cfg.k_c, curves);
    for (int loop = 0; loop < cfg.outer_loops; ++loop) {
        double eps = epsilon_at(loop, cfg.outer_loops, cfg.eps_start);
        auto sim = tr.collect_trajectories(wm, policy, users, cfg.horizon, eps, rng);
        for (auto& t : sim.transitions) buffer.push(std::move(t));
        tr.train_policy(policy, target, buffer, cfg.k_q, rng, curves);
        if (v == EvalVariant::dmir)
            tr.finetune_world_model(wm, sim.trajectories, cfg.k_c, curves);
    }
    return policy;
}

/// Logged-data variants: TD training on transitions replayed from the log.
/// The naive variant additionally injects one random never-interacted item
/// as a fake negative after each logged event (the sampling-bias ablation).
Policy train_logged(EvalVariant v, const LoggedDataset& ds, const TrainConfig& cfg) {
    Policy policy(policy_config(ds, cfg, true));
    Policy target(policy.config());
    target.sync_from(policy);
    ReplayBuffer buffer(std::size_t(cfg.buffer));
    Rng rng(cfg.seed ^ 0xe7037ed1a0b428dbULL);

    for (int u = 0; u < ds.n_users; ++u) {
        const auto& recs = ds.by_user[std::size_t(u)];
        if (recs.empty()) continue;
        std::set<int> known;
        for (const auto& r : recs) known.insert(r.item);
        std::vector<std::pair<int, int>> events;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            auto push_event = [&](int item, int fb, bool last) {
                Transition t;
                t.state = split_sequence(events, cfg.memory_size);
                t.action = item;
                t.reward = double(fb);
                events.push_back({item, fb});
                t.next_state = split_sequence(events, cfg.memory_size);
                t.done = last;
                buffer.push(std::move(t));
            };
            bool last = i + 1 == recs.size();
            if (v == EvalVariant::dqn_naive_neg && std::size_t(ds.n_items) > known.size()) {
                int fake;
                do {
                    fake = int(rng.index(std::size_t(ds.n_items)));
                } while (known.count(fake));
                push_event(fake, 0, false);
            }
            push_event(recs[i].item, recs[i].feedback, last);
        }
    }

    Trainer tr(ds, cfg);
    std::vector<CurvePoint> curves;
    tr.train_policy(policy, target, buffer, cfg.k_q, rng, curves);
    return policy;
}

void accumulate_curve(std::vector<double>& curve, const std::vector<EpisodeLog>& logs) {
    if (logs.empty()) return;
    for (const auto& log : logs) {
        double cum = 0.0;
        for (std::size_t t = 0; t < log.steps.size(); ++t) {
            cum += double(log.steps[t].feedback);
            curve[t] += cum;
        }
    }
}

}  // namespace

Policy train_variant(EvalVariant variant, const LoggedDataset& ds, TrainConfig cfg) {
    cfg.validate();
    switch (variant) {
        case EvalVariant::dmir:
        case EvalVariant::dqn_wm:
            return train_simulated(variant, ds, cfg);
        case EvalVariant::dmir_d:
        case EvalVariant::dqn_naive_neg:
            return train_logged(variant, ds, cfg);
        case EvalVariant::random_policy:
            return Policy(policy_config(ds, cfg, true));  // never consulted
    }
    throw std::invalid_argument("unknown eval variant");
}

std::vector<EpisodeLog> roll_episodes(EvalVariant variant, Policy& policy,
                                      GroundTruthEnv env, int horizon,
                                      std::uint64_t seed, int memory_size) {
    env.reseed(seed);
    Rng action_rng(seed ^ 0x2545f4914f6cdd1dULL);
    std::vector<int> candidates(std::size_t(env.n_items()));
    for (int i = 0; i < env.n_items(); ++i) candidates[std::size_t(i)] = i;

    std::vector<EpisodeLog> logs;
    logs.reserve(std::size_t(env.n_users()));
    for (int user = 0; user < env.n_users(); ++user) {
        env.reset(user);
        EpisodeLog log;
        log.user = user;
        log.seed = seed;
        std::vector<std::pair<int, int>> events;
        for (int t = 0; t < horizon; ++t) {
            int action;
            if (variant == EvalVariant::random_policy) {
                action = candidates[action_rng.index(candidates.size())];
            } else {
                auto split = split_sequence(events, memory_size);
                Tensor o = policy.encode_state(split).o;
                action = policy.select_action(o, candidates, 0.0, action_rng);
            }
            auto res = env.step(user, action);
            log.steps.push_back({action, res.accept_probability, res.feedback});
            events.push_back({action, res.feedback});
        }
        logs.push_back(std::move(log));
    }
    return logs;
}

MetricReport run_eval(EvalVariant variant, const LoggedDataset& ds,
                      const GroundTruthEnv& env, const EvalOptions& opt) {
    if (opt.seeds <= 0 || opt.horizon <= 0)
        throw std::invalid_argument("run_eval: seeds and horizon must be positive");
    MetricReport report;
    report.variant = to_string(variant);
    report.ks = opt.ks;
    report.horizon = opt.horizon;
    report.n_users = env.n_users();
    report.reward_curve.assign(std::size_t(opt.horizon), 0.0);

    for (int s = 0; s < opt.seeds; ++s) {
        TrainConfig cfg = opt.train;
        cfg.seed = opt.base_seed + std::uint64_t(s);
        Policy policy = train_variant(variant, ds, cfg);
        auto logs = roll_episodes(variant, policy, env, opt.horizon,
                                  opt.base_seed + 1000 + std::uint64_t(s),
                                  cfg.memory_size);
        SeedMetrics m;
        m.seed = cfg.seed;
        for (int k : opt.ks) {
            int k_eff = std::min(k, opt.horizon);
            m.hr.push_back(hr_at_k(logs, k_eff));
            m.ndcg.push_back(ndcg_at_k(logs, k_eff));
        }
        m.diversity = diversity(logs);
        m.f = f_measure(m.hr.empty() ? 0.0 : m.hr[0], m.diversity);
        m.cum_reward = mean_cumulative_reward(logs);
        report.per_seed.push_back(std::move(m));
        accumulate_curve(report.reward_curve, logs);
    }

    double norm = double(opt.seeds) * double(env.n_users());
    for (auto& v : report.reward_curve) v /= norm;

    // Mean and population standard deviation over seeds, field by field.
    auto aggregate = [&](auto get) {
        double mean = 0;
        for (const auto& m : report.per_seed) mean += get(m);
        mean /= double(report.per_seed.size());
        double var = 0;
        for (const auto& m : report.per_seed) {
            double d = get(m) - mean;
            var += d * d;
        }
        return std::pair<double, double>{mean,
                                         std::sqrt(var / double(report.per_seed.size()))};
    };
    report.mean.hr.resize(opt.ks.size());
    report.mean.ndcg.resize(opt.ks.size());
    report.stddev.hr.resize(opt.ks.size());
    report.stddev.ndcg.resize(opt.ks.size());
    for (std::size_t i = 0; i < opt.ks.size(); ++i) {
        std::tie(report.mean.hr[i], report.stddev.hr[i]) =
            aggregate([&](const SeedMetrics& m) { return m.hr[i]; });
        std::tie(report.mean.ndcg[i], report.stddev.ndcg[i]) =
            aggregate([&](const SeedMetrics& m) { return m.ndcg[i]; });
    }
    std::tie(report.mean.diversity, report.stddev.diversity) =
        aggregate([](const SeedMetrics& m) { return m.diversity; });
    std::tie(report.mean.f, report.stddev.f) =
        aggregate([](const SeedMetrics& m) { return m.f; });
    std::tie(report.mean.cum_reward, report.stddev.cum_reward) =
        aggregate([](const SeedMetrics& m) { return m.cum_reward; });
    return report;
}

void emit_report(const std::vector<MetricReport>& reports, const std::string& dir) {
    std::filesystem::create_directories(dir);

    auto metrics_json = [](const MetricReport& r, const SeedMetrics& m) {
        ordered_json j;
        j["f_measure"] = m.f;
        j["diversity"] = m.diversity;
        for (std::size_t i = 0; i < r.ks.size(); ++i) {
            j["hr@" + std::to_string(r.ks[i])] = m.hr[i];
            j["ndcg@" + std::to_string(r.ks[i])] = m.ndcg[i];
        }
        j["cumulative_reward"] = m.cum_reward;
        return j;
    };

    ordered_json root = ordered_json::array();
    for (const auto& r : reports) {
        ordered_json j;
        j["variant"] = r.variant;
        j["horizon"] = r.horizon;
        j["n_users"] = r.n_users;
        j["ks"] = r.ks;
        j["mean"] = metrics_json(r, r.mean);
        j["stddev"] = metrics_json(r, r.stddev);
        ordered_json seeds = ordered_json::array();
        for (const auto& m : r.per_seed) {
            auto row = metrics_json(r, m);
            row["seed"] = m.seed;
            seeds.push_back(row);
        }
        j["per_seed"] = seeds;
        root.push_back(j);
    }
    std::ofstream js(dir + "/report.json");
    if (!js) throw std::runtime_error("emit_report: cannot write in " + dir);
    js << root.dump(2) << '\n';

    std::ofstream cs(dir + "/report.csv");
    cs << "variant,seed,f_measure,diversity";
    if (!reports.empty())
        for (int k : reports[0].ks)
            cs << ",hr@" << k << ",ndcg@" << k;
    cs << ",cumulative_reward\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : reports)
        for (const auto& m : r.per_seed) {
            cs << r.variant << ',' << m.seed << ',' << num(m.f) << ',' << num(m.diversity);
            for (std::size_t i = 0; i < r.ks.size(); ++i)
                cs << ',' << num(m.hr[i]) << ',' << num(m.ndcg[i]);
            cs << ',' << num(m.cum_reward) << '\n';
        }

    std::ofstream curves(dir + "/curves.csv");
    curves << "variant,step,cumulative_reward\n";
    for (const auto& r : reports)
        for (std::size_t t = 0; t < r.reward_curve.size(); ++t)
            curves << r.variant << ',' << t + 1 << ',' << num(r.reward_curve[t]) << '\n';
    if (!curves) throw std::runtime_error("emit_report: cannot write curves in " + dir);
}

std::string reference_results() {
    // Published full-scale numbers (Ciao benchmark), shown for context only;
    // desk-scale simulated runs are not comparable to them.
    return "reference (full-scale, Ciao benchmark, display only):\n"
           "method  f-measure  diversity  hr@20   hr@50   ndcg@20  ndcg@50\n"
           "dmir    0.4076     0.3440     0.5000  0.3722  0.5244   0.4183\n";
}

}  // namespace dmir
