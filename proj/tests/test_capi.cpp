#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dmir/dmir.h"

namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "dmir_capi" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

constexpr const char* kSmallSynth =
    R"({"users":8,"items":10,"rank":4,"horizon":6,"n_buckets":3,)"
    R"("neighbors_per_user":2,"alpha":0.9,"seed":5})";

}  // namespace

TEST_CASE("version and error reporting basics") {
    CHECK(std::string(dmir_version()) == "1.0.0");
    dmir_dataset* ds = nullptr;
    CHECK(dmir_dataset_ingest(nullptr, nullptr, nullptr, &ds) ==
          DMIR_ERROR_NULL_ARGUMENT);
    CHECK(std::string(dmir_last_error()).find("null") != std::string::npos);
    CHECK(dmir_dataset_open("/nonexistent/dir", &ds) != DMIR_OK);
    CHECK(std::string(dmir_last_error()).size() > 0);
}

TEST_CASE("synthetic benchmark roundtrip: write, open, counts, split, save") {
    auto dir = fresh_dir("synth");
    REQUIRE(dmir_synth_write(kSmallSynth, dir.c_str()) == DMIR_OK);
    CHECK(fs::exists(dir + "/interactions.csv"));
    CHECK(fs::exists(dir + "/trust.csv"));
    CHECK(fs::exists(dir + "/meta.json"));
    CHECK(fs::exists(dir + "/env"));

    dmir_dataset* ds = nullptr;
    REQUIRE(dmir_dataset_open(dir.c_str(), &ds) == DMIR_OK);
    int32_t nu = 0, ni = 0;
    int64_t nr = 0;
    REQUIRE(dmir_dataset_counts(ds, &nu, &ni, &nr) == DMIR_OK);
    CHECK(nu == 8);
    CHECK(ni == 10);
    CHECK(nr == 8 * 6);

    dmir_dataset* train = nullptr;
    dmir_dataset* test = nullptr;
    REQUIRE(dmir_dataset_split(ds, 0.5, &train, &test) == DMIR_OK);
    int64_t a = 0, b = 0;
    dmir_dataset_counts(train, nullptr, nullptr, &a);
    dmir_dataset_counts(test, nullptr, nullptr, &b);
    CHECK(a + b == nr);
    CHECK(a == 8 * 3);

    auto dir2 = fresh_dir("synth_resave");
    REQUIRE(dmir_dataset_save(ds, dir2.c_str()) == DMIR_OK);
    dmir_dataset* ds2 = nullptr;
    REQUIRE(dmir_dataset_open(dir2.c_str(), &ds2) == DMIR_OK);
    int64_t nr2 = 0;
    dmir_dataset_counts(ds2, nullptr, nullptr, &nr2);
    CHECK(nr2 == nr);

    dmir_dataset_close(ds);
    dmir_dataset_close(ds2);
    dmir_dataset_close(train);
    dmir_dataset_close(test);
}

TEST_CASE("synthetic generation is deterministic per seed") {
    auto d1 = fresh_dir("det1");
    auto d2 = fresh_dir("det2");
    REQUIRE(dmir_synth_write(kSmallSynth, d1.c_str()) == DMIR_OK);
    REQUIRE(dmir_synth_write(kSmallSynth, d2.c_str()) == DMIR_OK);
    std::ifstream a(d1 + "/interactions.csv"), b(d2 + "/interactions.csv");
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(sa.size() > 0);
}

TEST_CASE("environment: probabilities, repeat decay, reset, reseed") {
    auto dir = fresh_dir("env");
    REQUIRE(dmir_synth_write(kSmallSynth, dir.c_str()) == DMIR_OK);
    dmir_env* env = nullptr;
    REQUIRE(dmir_env_open((dir + "/env").c_str(), &env) == DMIR_OK);

    double p0 = -1;
    REQUIRE(dmir_env_accept_probability(env, 0, 3, &p0) == DMIR_OK);
    CHECK(p0 > 0.0);
    CHECK(p0 < 1.0);

    // One exposure multiplies the probability by the decay factor exactly.
    REQUIRE(dmir_env_step(env, 0, 3, nullptr, nullptr) == DMIR_OK);
    double p1 = -1;
    REQUIRE(dmir_env_accept_probability(env, 0, 3, &p1) == DMIR_OK);
    CHECK(p1 == doctest::Approx(p0 * 0.9).epsilon(1e-12));

    REQUIRE(dmir_env_reset(env, 0) == DMIR_OK);
    double p2 = -1;
    REQUIRE(dmir_env_accept_probability(env, 0, 3, &p2) == DMIR_OK);
    CHECK(p2 == p0);

    // Reseeding reproduces the sampled feedback sequence.
    auto sample_five = [&](uint64_t seed) {
        dmir_env_reset(env, 1);
        dmir_env_reseed(env, seed);
        std::string s;
        for (int i = 0; i < 5; ++i) {
            int32_t fb = -1;
            REQUIRE(dmir_env_step(env, 1, i, &fb, nullptr) == DMIR_OK);
            s += char('0' + fb);
        }
        return s;
    };
    CHECK(sample_five(7) == sample_five(7));

    CHECK(dmir_env_accept_probability(env, 999, 0, &p0) != DMIR_OK);
    dmir_env_close(env);
}

TEST_CASE("pretrain, save, reopen and predict through the C interface") {
    auto dir = fresh_dir("pretrain");
    REQUIRE(dmir_synth_write(kSmallSynth, dir.c_str()) == DMIR_OK);
    dmir_dataset* ds = nullptr;
    REQUIRE(dmir_dataset_open(dir.c_str(), &ds) == DMIR_OK);

    const char* cfg =
        R"({"dim":8,"lr":0.01,"batch":16,"droprate":0.0,"n_samples":1,"seed":3})";
    auto ckpt = dir + "/world_model.ckpt";
    dmir_world_model* wm = nullptr;
    REQUIRE(dmir_pretrain(ds, cfg, 30, ckpt.c_str(), (dir + "/curves.csv").c_str(),
                          &wm) == DMIR_OK);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(dir + "/curves.csv"));

    double p_live = -1;
    REQUIRE(dmir_world_model_predict(wm, ds, 2, 4, 1, 11, &p_live) == DMIR_OK);
    CHECK(p_live > 0.0);
    CHECK(p_live < 1.0);

    dmir_world_model* wm2 = nullptr;
    REQUIRE(dmir_world_model_open(ckpt.c_str(), &wm2) == DMIR_OK);
    double p_loaded = -1;
    REQUIRE(dmir_world_model_predict(wm2, ds, 2, 4, 1, 11, &p_loaded) == DMIR_OK);
    CHECK(p_loaded == p_live);  // checkpoints reproduce predictions bitwise

    CHECK(dmir_world_model_predict(wm, ds, 2, 999, 1, 0, &p_live) ==
          DMIR_ERROR_INVALID_ARGUMENT);
    dmir_world_model_close(wm);
    dmir_world_model_close(wm2);
    dmir_dataset_close(ds);
}

TEST_CASE("malformed json configs are rejected as invalid arguments") {
    auto dir = fresh_dir("badjson");
    CHECK(dmir_synth_write("{not json", dir.c_str()) == DMIR_ERROR_INVALID_ARGUMENT);
    CHECK(dmir_ident_bench_run(R"({"n_u":0})", (dir + "/r.json").c_str()) ==
          DMIR_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("training run writes a manifest through the C interface") {
    auto dir = fresh_dir("train");
    REQUIRE(dmir_synth_write(kSmallSynth, dir.c_str()) == DMIR_OK);
    dmir_dataset* ds = nullptr;
    REQUIRE(dmir_dataset_open(dir.c_str(), &ds) == DMIR_OK);
    const char* cfg =
        R"({"dim":8,"lr":0.01,"batch":8,"droprate":0.0,"n_samples":1,"seed":1,)"
        R"("k_c":5,"k_q":5,"outer_loops":1,"horizon":4,"buffer":200,)"
        R"("update_size":10,"target_update":5,"memory_size":5,"state_refresh":50})";
    auto out = dir + "/run";
    REQUIRE(dmir_train_run(ds, cfg, out.c_str()) == DMIR_OK);
    CHECK(fs::exists(out + "/manifest.json"));
    CHECK(fs::exists(out + "/curves.csv"));
    CHECK(fs::exists(out + "/world_model.ckpt"));
    CHECK(fs::exists(out + "/policy.ckpt"));
    std::ifstream in(out + "/manifest.json");
    auto j = nlohmann::json::parse(in);
    CHECK(j.contains("loop_rewards"));
    dmir_dataset_close(ds);
}

TEST_CASE("evaluation run writes reports through the C interface") {
    auto dir = fresh_dir("eval");
    REQUIRE(dmir_synth_write(kSmallSynth, dir.c_str()) == DMIR_OK);
    dmir_dataset* ds = nullptr;
    dmir_env* env = nullptr;
    REQUIRE(dmir_dataset_open(dir.c_str(), &ds) == DMIR_OK);
    REQUIRE(dmir_env_open((dir + "/env").c_str(), &env) == DMIR_OK);
    const char* opts =
        R"({"ks":[5],"horizon":6,"seeds":1,"base_seed":0,)"
        R"("train":{"dim":8,"batch":8,"droprate":0.0,"n_samples":1,)"
        R"("k_c":5,"k_q":5,"outer_loops":1,"horizon":4,"update_size":10,)"
        R"("target_update":5,"memory_size":5,"state_refresh":50}})";
    auto out = dir + "/eval_out";
    REQUIRE(dmir_eval_run(ds, env, "random", opts, out.c_str()) == DMIR_OK);
    CHECK(fs::exists(out + "/report.json"));
    CHECK(fs::exists(out + "/report.csv"));
    CHECK(fs::exists(out + "/curves.csv"));
    CHECK(dmir_eval_run(ds, env, "no-such-variant", opts, out.c_str()) != DMIR_OK);
    dmir_env_close(env);
    dmir_dataset_close(ds);
}

TEST_CASE("recovery bench runs through the C interface") {
    auto dir = fresh_dir("ident");
    const char* cfg =
        R"({"users":20,"horizon":10,"n_items":6,"train_steps":10,)"
        R"("batch":16,"seeds":1,"seed":2})";
    auto path = dir + "/recovery.json";
    REQUIRE(dmir_ident_bench_run(cfg, path.c_str()) == DMIR_OK);
    std::ifstream in(path);
    REQUIRE(bool(in));
    auto j = nlohmann::json::parse(in);
    CHECK(j.contains("mean"));
    CHECK(j["per_seed"].size() == 1);
}

TEST_CASE("reference table is exposed for display") {
    std::string table = dmir_reference_results();
    CHECK(table.find("0.4076") != std::string::npos);
    CHECK(table.find("display only") != std::string::npos);
}
