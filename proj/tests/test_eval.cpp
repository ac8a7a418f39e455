#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eval/runner.hpp"

using namespace dmir;

namespace {

EpisodeLog make_log(const std::vector<int>& items, const std::vector<int>& feedback) {
    EpisodeLog log;
    for (std::size_t i = 0; i < items.size(); ++i)
        log.steps.push_back({items[i], 0.5, feedback[i]});
    return log;
}

std::vector<EpisodeLog> random_logs(int n, int horizon, int items, Rng& rng) {
    std::vector<EpisodeLog> logs;
    for (int e = 0; e < n; ++e) {
        EpisodeLog log;
        log.user = e;
        for (int t = 0; t < horizon; ++t)
            log.steps.push_back({int(rng.index(std::size_t(items))), rng.uniform(),
                                 rng.bernoulli(0.4) ? 1 : 0});
        logs.push_back(std::move(log));
    }
    return logs;
}

// Brute-force recomputations, written independently of the library versions.
double brute_hr(const std::vector<EpisodeLog>& logs, int k) {
    double acc = 0;
    for (const auto& log : logs) {
        int hits = 0;
        for (int i = 0; i < k; ++i)
            if (log.steps[std::size_t(i)].feedback == 1) hits++;
        acc += double(hits) / double(k);
    }
    return acc / double(logs.size());
}

double brute_ndcg(const std::vector<EpisodeLog>& logs, int k) {
    double acc = 0;
    for (const auto& log : logs) {
        double dcg = 0, idcg = 0;
        int hits = 0;
        for (int pos = 1; pos <= k; ++pos)
            if (log.steps[std::size_t(pos - 1)].feedback) {
                dcg += 1.0 / std::log2(double(pos + 1));
                hits++;
            }
        for (int pos = 1; pos <= hits; ++pos)
            idcg += 1.0 / std::log2(double(pos + 1));
        if (hits > 0) acc += dcg / idcg;
    }
    return acc / double(logs.size());
}

double brute_diversity(const std::vector<EpisodeLog>& logs) {
    double acc = 0;
    for (const auto& log : logs) {
        std::set<int> seen;
        for (const auto& s : log.steps) seen.insert(s.item);
        acc += double(seen.size()) / double(log.steps.size());
    }
    return acc / double(logs.size());
}

LoggedDataset tiny_eval_dataset() {
    ParsedInteractions parsed;
    for (int u = 0; u < 5; ++u) parsed.user_id_map.push_back(u);
    for (int i = 0; i < 8; ++i) parsed.item_id_map.push_back(i);
    std::int64_t ts = 0;
    for (int u = 0; u < 5; ++u)
        for (int s = 0; s < 8; ++s)
            parsed.records.push_back({u, (u + 2 * s) % 8, (u + s) % 2, ts++});
    IngestOptions opt;
    opt.n_buckets = 2;
    return build_dataset(parsed, {}, opt);
}

TrainConfig fast_train() {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch = 8;
    cfg.buffer = 200;
    cfg.update_size = 4;
    cfg.target_update = 10;
    cfg.droprate = 0.0;
    cfg.dim = 4;
    cfg.memory_size = 6;
    cfg.k_c = 5;
    cfg.k_q = 5;
    cfg.outer_loops = 1;
    cfg.horizon = 4;
    cfg.n_samples = 1;
    return cfg;
}

}  // namespace

TEST_CASE("hr@k: hand-built counting examples") {
    std::vector<int> fb(20, 0), items(20);
    for (int i = 0; i < 20; ++i) items[std::size_t(i)] = i;
    fb[2] = fb[7] = fb[11] = 1;  // 3 hits in the first 20
    auto logs = std::vector<EpisodeLog>{make_log(items, fb)};
    CHECK(hr_at_k(logs, 20) == doctest::Approx(0.15));
    std::vector<int> ones(20, 1), zeros(20, 0);
    CHECK(hr_at_k({make_log(items, ones)}, 20) == 1.0);
    CHECK(hr_at_k({make_log(items, zeros)}, 20) == 0.0);
    CHECK_THROWS(hr_at_k(logs, 0));
    CHECK_THROWS(hr_at_k(logs, 21));
}

TEST_CASE("ndcg@k: hand-evaluated positions") {
    std::vector<int> items(20);
    for (int i = 0; i < 20; ++i) items[std::size_t(i)] = i;
    std::vector<int> ones(20, 1);
    CHECK(ndcg_at_k({make_log(items, ones)}, 20) == doctest::Approx(1.0));
    std::vector<int> first(20, 0);
    first[0] = 1;
    CHECK(ndcg_at_k({make_log(items, first)}, 20) == doctest::Approx(1.0));
    std::vector<int> third(20, 0);
    third[2] = 1;  // single hit at position 3: 1/log2(4) = 0.5
    CHECK(ndcg_at_k({make_log(items, third)}, 20) == doctest::Approx(0.5));
    std::vector<int> zeros(20, 0);
    CHECK(ndcg_at_k({make_log(items, zeros)}, 20) == 0.0);
}

TEST_CASE("diversity: distinct-over-total counting") {
    std::vector<int> fb(20, 1);
    std::vector<int> distinct(20);
    for (int i = 0; i < 20; ++i) distinct[std::size_t(i)] = i;
    CHECK(diversity({make_log(distinct, fb)}) == 1.0);
    std::vector<int> same(20, 7);
    CHECK(diversity({make_log(same, fb)}) == doctest::Approx(0.05));  // 1/20
    std::vector<int> twelve(20);
    for (int i = 0; i < 20; ++i) twelve[std::size_t(i)] = i % 12;
    CHECK(diversity({make_log(twelve, fb)}) == doctest::Approx(0.6));
}

TEST_CASE("f_measure is the harmonic mean with a zero guard") {
    CHECK(f_measure(1.0, 1.0) == 1.0);
    CHECK(f_measure(0.7, 0.0) == 0.0);
    CHECK(f_measure(0.0, 0.0) == 0.0);
    CHECK(f_measure(0.5, 0.25) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS(f_measure(1.5, 0.5));
}

TEST_CASE("metrics match brute force exactly on 100 random logs") {
    Rng rng(31);
    auto logs = random_logs(100, 32, 15, rng);
    for (int k : {5, 20, 32}) {
        CHECK(hr_at_k(logs, k) == brute_hr(logs, k));
        CHECK(ndcg_at_k(logs, k) == brute_ndcg(logs, k));
    }
    CHECK(diversity(logs) == brute_diversity(logs));
}

TEST_CASE("adding a hit never decreases hr or ndcg") {
    Rng rng(32);
    auto logs = random_logs(20, 16, 10, rng);
    double hr0 = hr_at_k(logs, 16), nd0 = ndcg_at_k(logs, 16);
    for (auto& log : logs)
        for (auto& s : log.steps)
            if (s.feedback == 0) {
                s.feedback = 1;  // flip one miss per episode
                break;
            }
    CHECK(hr_at_k(logs, 16) >= hr0);
    CHECK(ndcg_at_k(logs, 16) >= nd0);
}

TEST_CASE("cumulative reward counts accepted feedback per episode") {
    std::vector<int> items = {0, 1, 2, 3};
    std::vector<int> fb = {1, 0, 1, 1};
    CHECK(mean_cumulative_reward({make_log(items, fb)}) == 3.0);
}

TEST_CASE("variant names parse both ways") {
    for (const char* name : {"dmir", "dmir-d", "dqn-naive-neg", "dqn+wm", "random"})
        CHECK(to_string(variant_from_string(name)) == name);
    CHECK_THROWS(variant_from_string("dqn"));
}

TEST_CASE("random policy hr matches the env base acceptance rate") {
    auto env = GroundTruthEnv::make(30, 12, 4, 1.0, 16, 3);  // no decay
    Rng init(8);
    for (auto& v : env.user_embeddings()) v = init.normal() * 0.4;
    for (auto& v : env.item_embeddings()) v = init.normal() * 0.4;

    // Ground-truth base rate averaged over the catalog and users.
    double base = 0;
    for (int u = 0; u < 30; ++u)
        for (int i = 0; i < 12; ++i) base += env.base_probability(u, i);
    base /= 30.0 * 12.0;

    auto ds = tiny_eval_dataset();
    EvalOptions opt;
    opt.ks = {16};
    opt.horizon = 16;
    opt.seeds = 5;
    opt.train = fast_train();
    auto report = run_eval(EvalVariant::random_policy, ds, env, opt);
    CHECK(std::abs(report.mean.hr[0] - base) < 0.05);
}

TEST_CASE("run_eval is deterministic and reports seed-wise rows") {
    auto ds = tiny_eval_dataset();
    auto env = GroundTruthEnv::make(5, 8, 3, 0.9, 8, 1);
    Rng init(2);
    for (auto& v : env.user_embeddings()) v = init.normal() * 0.5;
    for (auto& v : env.item_embeddings()) v = init.normal() * 0.5;
    EvalOptions opt;
    opt.ks = {4, 8};
    opt.horizon = 8;
    opt.seeds = 2;
    opt.train = fast_train();

    auto a = run_eval(EvalVariant::dmir_d, ds, env, opt);
    auto b = run_eval(EvalVariant::dmir_d, ds, env, opt);
    REQUIRE(a.per_seed.size() == 2);
    for (std::size_t s = 0; s < 2; ++s) {
        CHECK(a.per_seed[s].hr == b.per_seed[s].hr);
        CHECK(a.per_seed[s].ndcg == b.per_seed[s].ndcg);
        CHECK(a.per_seed[s].cum_reward == b.per_seed[s].cum_reward);
    }
    CHECK(a.reward_curve == b.reward_curve);
    for (std::size_t i = 0; i < a.per_seed.size(); ++i) {
        for (double v : a.per_seed[i].hr) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(a.per_seed[i].cum_reward >= 0.0);
        CHECK(a.per_seed[i].cum_reward <= 8.0);
    }
}

TEST_CASE("emit_report writes json, per-seed csv and a non-decreasing curve") {
    auto ds = tiny_eval_dataset();
    auto env = GroundTruthEnv::make(5, 8, 3, 0.9, 8, 1);
    Rng init(5);
    for (auto& v : env.user_embeddings()) v = init.normal() * 0.5;
    for (auto& v : env.item_embeddings()) v = init.normal() * 0.5;
    EvalOptions opt;
    opt.ks = {4};
    opt.horizon = 8;
    opt.seeds = 3;
    opt.train = fast_train();

    auto r1 = run_eval(EvalVariant::random_policy, ds, env, opt);
    auto r2 = run_eval(EvalVariant::dmir_d, ds, env, opt);
    std::string dir = "/tmp/dmir_eval_report";
    std::filesystem::remove_all(dir);
    emit_report({r1, r2}, dir);

    std::ifstream js(dir + "/report.json");
    REQUIRE(bool(js));
    auto root = nlohmann::json::parse(js);
    REQUIRE(root.size() == 2);
    CHECK(root[0]["variant"] == "random");
    CHECK(root[0]["per_seed"].size() == 3);
    CHECK(root[1]["mean"]["hr@4"].get<double>() ==
          doctest::Approx(r2.mean.hr[0]).epsilon(1e-9));

    std::ifstream cs(dir + "/report.csv");
    std::string line;
    int rows = 0;
    std::getline(cs, line);  // header
    while (std::getline(cs, line))
        if (!line.empty()) rows++;
    CHECK(rows == 6);  // seeds x variants

    std::ifstream curves(dir + "/curves.csv");
    std::getline(curves, line);
    double prev = -1;
    std::string variant_prev;
    while (std::getline(curves, line)) {
        std::stringstream ss(line);
        std::string variant, step, value;
        std::getline(ss, variant, ',');
        std::getline(ss, step, ',');
        std::getline(ss, value, ',');
        if (variant != variant_prev) prev = -1;
        double v = std::stod(value);
        CHECK(v >= prev);  // cumulative reward never decreases
        prev = v;
        variant_prev = variant;
    }
}

TEST_CASE("reference table renders the published comparison row") {
    auto text = reference_results();
    CHECK(text.find("0.5000") != std::string::npos);
    CHECK(text.find("0.5244") != std::string::npos);
    CHECK(text.find("display only") != std::string::npos);
}
