#include "trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <json.hpp>

namespace dmir {

using nlohmann::json;

void TrainConfig::validate() const {
    if (lr <= 0 || batch <= 0 || buffer <= 0 || update_size <= 0 || target_update <= 0 ||
        dim <= 0 || memory_size <= 0 || horizon <= 0 || n_samples <= 0 ||
        state_refresh <= 0 || outer_loops <= 0)
        throw std::invalid_argument("train config: all sizes must be positive");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("train config: need 0 <= gamma < 1");
    if (k_c < 0 || k_q < 0) throw std::invalid_argument("train config: negative step count");
    if (droprate < 0.0 || droprate >= 1.0)
        throw std::invalid_argument("train config: droprate in [0,1)");
    if (eps_start < 0.0 || eps_start > 1.0)
        throw std::invalid_argument("train config: eps_start in [0,1]");
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("train config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text);
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.buffer = j.value("buffer", c.buffer);
    c.update_size = j.value("update_size", c.update_size);
    c.gamma = j.value("gamma", c.gamma);
    c.target_update = j.value("target_update", c.target_update);
    c.droprate = j.value("droprate", c.droprate);
    c.dim = j.value("dim", c.dim);
    c.memory_size = j.value("memory_size", c.memory_size);
    c.eps_start = j.value("eps_start", c.eps_start);
    c.k_c = j.value("k_c", c.k_c);
    c.k_q = j.value("k_q", c.k_q);
    c.outer_loops = j.value("outer_loops", c.outer_loops);
    c.horizon = j.value("horizon", c.horizon);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.binary_reward = j.value("binary_reward", c.binary_reward);
    c.double_dqn = j.value("double_dqn", c.double_dqn);
    c.state_refresh = j.value("state_refresh", c.state_refresh);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::string TrainConfig::to_json() const {
    json j;
    j["lr"] = lr;
    j["batch"] = batch;
    j["buffer"] = buffer;
    j["update_size"] = update_size;
    j["gamma"] = gamma;
    j["target_update"] = target_update;
    j["droprate"] = droprate;
    j["dim"] = dim;
    j["memory_size"] = memory_size;
    j["eps_start"] = eps_start;
    j["k_c"] = k_c;
    j["k_q"] = k_q;
    j["outer_loops"] = outer_loops;
    j["horizon"] = horizon;
    j["n_samples"] = n_samples;
    j["binary_reward"] = binary_reward;
    j["double_dqn"] = double_dqn;
    j["state_refresh"] = state_refresh;
    j["seed"] = seed;
    return j.dump(2);
}

Trainer::Trainer(const LoggedDataset& dataset, const TrainConfig& cfg)
    : ds_(dataset),
      cfg_(cfg),
      wm_opt_(cfg.lr),
      policy_opt_(cfg.lr),
      rng_(cfg.seed ^ 0x5851f42d4c957f2dULL) {
    cfg_.validate();
    if (dataset.n_records() == 0) throw std::invalid_argument("trainer: empty dataset");
}

std::vector<WorldModel::ElboSample> Trainer::make_pairs(WorldModel& wm,
                                                        const std::vector<WmObs>& history) {
    std::vector<WorldModel::ElboSample> out;
    if (history.size() < 2) return out;
    auto states = wm.fold_states(history);
    out.reserve(history.size() - 1);
    for (std::size_t i = 1; i < history.size(); ++i) {
        WorldModel::ElboSample s;
        s.prev = history[i - 1];
        s.cur = history[i];
        s.prev_state = states[i - 1];
        out.push_back(std::move(s));
    }
    return out;
}

void Trainer::elbo_steps(WorldModel& wm, const std::vector<std::vector<WmObs>>& histories,
                         const std::string& phase, int steps,
                         std::vector<CurvePoint>& curves) {
    if (steps == 0) return;
    // Pair pool indexed as (history, position); folded states are cached and
    // refreshed periodically because they move with the parameters.
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t h = 0; h < histories.size(); ++h)
        for (std::size_t i = 1; i < histories[h].size(); ++i) pool.push_back({h, i});
    if (pool.empty())
        throw std::invalid_argument(phase + ": no consecutive-event pairs to train on");

    std::vector<std::vector<WorldModel::ElboSample>> cache;
    auto refresh = [&] {
        cache.clear();
        cache.reserve(histories.size());
        for (const auto& h : histories) cache.push_back(make_pairs(wm, h));
    };
    refresh();

    auto params = wm.params();
    std::size_t batch = std::min(pool.size(), std::size_t(cfg_.batch));
    for (int step = 0; step < steps; ++step) {
        if (step > 0 && step % cfg_.state_refresh == 0) refresh();
        std::vector<WorldModel::ElboSample> samples;
        samples.reserve(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            auto [h, i] = pool[rng_.index(pool.size())];
            samples.push_back(cache[h][i - 1]);
        }
        Tape t;
        auto loss = wm.elbo_loss_node(t, samples, true, rng_);
        double v = t.value(loss).data[0];
        if (!std::isfinite(v))
            throw std::runtime_error(phase + ": loss diverged (non-finite) at step " +
                                     std::to_string(step));
        for (auto* p : params) p->zero_grad();
        t.backward(loss);
        wm_opt_.step(params);
        curves.push_back({phase, step, v});
    }
}

void Trainer::pretrain_world_model(WorldModel& wm, int steps,
                                   std::vector<CurvePoint>& curves) {
    std::vector<std::vector<WmObs>> histories;
    for (int u = 0; u < ds_.n_users; ++u) {
        const auto& recs = ds_.by_user[std::size_t(u)];
        if (recs.size() < 2) continue;
        std::vector<WmObs> h;
        h.reserve(recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) h.push_back(make_obs(ds_, u, i));
        histories.push_back(std::move(h));
    }
    elbo_steps(wm, histories, "pretrain", steps, curves);
}

CollectResult Trainer::collect_trajectories(WorldModel& wm, Policy& policy,
                                            const std::vector<int>& users, int horizon,
                                            double epsilon, Rng& rng) {
    CollectResult out;
    if (horizon <= 0) return out;
    int last_bucket = int(ds_.popularity.buckets.size()) - 1;
    const auto& z = ds_.popularity.buckets.back();
    std::vector<int> candidates(std::size_t(ds_.n_items));
    for (int i = 0; i < ds_.n_items; ++i) candidates[std::size_t(i)] = i;

    double reward_total = 0.0;
    for (int user : users) {
        std::vector<WmObs> history;
        std::vector<std::pair<int, int>> events;
        Tensor state = wm.zero_state();
        auto neighbors = ds_.neighbors(last_bucket, user);
        for (int step = 0; step < horizon; ++step) {
            SplitSequence split = split_sequence(events, cfg_.memory_size);
            Tensor o = policy.encode_state(split).o;
            int action = policy.select_action(o, candidates, epsilon, rng);
            auto pop = pop_features(z, action);
            double prob = wm.debiased_feedback_given(
                state, history.empty() ? nullptr : &history.back(), action, pop,
                cfg_.n_samples, rng);
            int y = rng.bernoulli(prob) ? 1 : 0;

            WmObs obs;
            obs.item = action;
            obs.feedback = y;
            obs.neighbors = neighbors;
            obs.pop = pop;
            state = wm.user_state(state, obs);
            history.push_back(obs);
            events.push_back({action, y});

            Transition tr;
            tr.state = std::move(split);
            tr.action = action;
            tr.reward = cfg_.binary_reward ? double(y) : prob;
            tr.next_state = split_sequence(events, cfg_.memory_size);
            tr.done = step == horizon - 1;
            reward_total += tr.reward;
            out.transitions.push_back(std::move(tr));
        }
        out.trajectories.push_back(std::move(history));
    }
    if (!users.empty())
        out.mean_reward = reward_total / double(users.size());  // per episode
    return out;
}

void Trainer::train_policy(Policy& policy, Policy& target, ReplayBuffer& buffer, int steps,
                           Rng& rng, std::vector<CurvePoint>& curves) {
    if (buffer.size() < std::size_t(cfg_.update_size)) {
        std::fprintf(stderr,
                     "policy phase skipped: buffer %zu below update size %d\n",
                     buffer.size(), cfg_.update_size);
        return;
    }
    auto params = policy.params();
    std::size_t batch = std::min(buffer.size(), std::size_t(cfg_.batch));
    for (int step = 0; step < steps; ++step) {
        auto transitions = buffer.sample(batch, rng);
        Tape t;
        auto loss = policy.td_loss_node(t, transitions, target, cfg_.gamma, cfg_.double_dqn);
        double v = t.value(loss).data[0];
        if (!std::isfinite(v))
            throw std::runtime_error("policy: loss diverged (non-finite) at step " +
                                     std::to_string(step));
        for (auto* p : params) p->zero_grad();
        t.backward(loss);
        policy_opt_.step(params);
        if ((step + 1) % cfg_.target_update == 0) target.sync_from(policy);
        curves.push_back({"policy", step, v});
    }
}

void Trainer::finetune_world_model(WorldModel& wm,
                                   const std::vector<std::vector<WmObs>>& sim, int steps,
                                   std::vector<CurvePoint>& curves) {
    if (steps == 0) return;
    if (sim.empty()) throw std::invalid_argument("finetune: empty simulated set");
    elbo_steps(wm, sim, "finetune", steps, curves);
}

RunManifest Trainer::run(const std::string& out_dir) {
    auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out_dir);
    RunManifest m;
    m.config_json = cfg_.to_json();

    WorldModelConfig wc;
    wc.dim = cfg_.dim;
    wc.n_users = ds_.n_users;
    wc.n_items = ds_.n_items;
    wc.droprate = cfg_.droprate;
    wc.n_samples = cfg_.n_samples;
    wc.seed = cfg_.seed;
    WorldModel wm(wc);

    PolicyConfig pc;
    pc.dim = cfg_.dim;
    pc.n_items = ds_.n_items;
    pc.memory_size = cfg_.memory_size;
    pc.seed = cfg_.seed;
    Policy policy(pc);
    Policy target(pc);
    target.sync_from(policy);
    ReplayBuffer buffer(std::size_t(cfg_.buffer));

    std::vector<int> users(std::size_t(ds_.n_users));
    for (int u = 0; u < ds_.n_users; ++u) users[std::size_t(u)] = u;

    m.phase_log.push_back("pretrain");
    pretrain_world_model(wm, cfg_.k_c, m.curves);

    for (int loop = 0; loop < cfg_.outer_loops; ++loop) {
        double eps = epsilon_at(loop, cfg_.outer_loops, cfg_.eps_start);
        m.phase_log.push_back("collect");
        // The simulated trajectory set starts empty each loop.
        CollectResult sim = collect_trajectories(wm, policy, users, cfg_.horizon, eps, rng_);
        for (auto& tr : sim.transitions) buffer.push(std::move(tr));
        m.loop_rewards.push_back(sim.mean_reward);
        m.curves.push_back({"reward", loop, sim.mean_reward});

        m.phase_log.push_back("policy");
        train_policy(policy, target, buffer, cfg_.k_q, rng_, m.curves);

        m.phase_log.push_back("finetune");
        finetune_world_model(wm, sim.trajectories, cfg_.k_c, m.curves);

        // Converged when the mean episode reward moved < 1% across each of
        // the last 3 consecutive loops.
        std::size_t n = m.loop_rewards.size();
        if (n >= 4) {
            bool flat = true;
            for (std::size_t i = n - 3; i < n; ++i) {
                double prev = m.loop_rewards[i - 1], cur = m.loop_rewards[i];
                if (std::abs(cur - prev) >= 0.01 * std::max(std::abs(prev), 1e-12))
                    flat = false;
            }
            if (flat) {
                m.converged = true;
                break;
            }
        }
    }

    m.world_model_path = out_dir + "/world_model.ckpt";
    m.policy_path = out_dir + "/policy.ckpt";
    wm.save(m.world_model_path);
    policy.save(m.policy_path);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                         .count();
    write_manifest(m, out_dir);
    return m;
}

void write_manifest(const RunManifest& m, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    json j;
    j["config"] = json::parse(m.config_json);
    j["phase_log"] = m.phase_log;
    j["loop_rewards"] = m.loop_rewards;
    j["converged"] = m.converged;
    j["wall_seconds"] = m.wall_seconds;
    j["world_model"] = m.world_model_path;
    j["policy"] = m.policy_path;
    std::ofstream out(out_dir + "/manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + out_dir);
    out << j.dump(2) << '\n';

    std::ofstream cs(out_dir + "/curves.csv");
    cs << "phase,step,value\n";
    char buf[64];
    for (const auto& p : m.curves) {
        std::snprintf(buf, sizeof buf, "%.17g", p.value);
        cs << p.phase << ',' << p.step << ',' << buf << '\n';
    }
    if (!cs) throw std::runtime_error("cannot write curves in " + out_dir);
}

}  // namespace dmir
