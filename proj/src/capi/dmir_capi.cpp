#include "dmir/dmir.h"

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ios>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "data/dataset.hpp"
#include "data/synth.hpp"
#include "env/env.hpp"
#include "eval/runner.hpp"
#include "ident/bench.hpp"
#include "train/trainer.hpp"
#include "wm/world_model.hpp"

using nlohmann::json;

struct dmir_dataset {
    dmir::LoggedDataset ds;
    std::vector<dmir::TrustEdge> edges;
    dmir::IngestOptions options;
};

struct dmir_env {
    dmir::GroundTruthEnv env;
};

struct dmir_world_model {
    dmir::WorldModel wm;
};

namespace {

thread_local std::string g_last_error;

dmir_status fail(dmir_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

template <typename Fn>
dmir_status wrap(Fn&& fn) {
    try {
        fn();
        return DMIR_OK;
    } catch (const std::invalid_argument& e) {
        return fail(DMIR_ERROR_INVALID_ARGUMENT, e.what());
    } catch (const json::exception& e) {
        return fail(DMIR_ERROR_INVALID_ARGUMENT, e.what());
    } catch (const std::ios_base::failure& e) {
        return fail(DMIR_ERROR_IO, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(DMIR_ERROR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(DMIR_ERROR_RUNTIME, e.what());
    }
}

dmir_status require(bool ok, const char* what) {
    return ok ? DMIR_OK : fail(DMIR_ERROR_NULL_ARGUMENT, std::string(what) + " is null");
}

#define DMIR_REQUIRE(cond, what)                                  \
    do {                                                          \
        if (dmir_status s_ = require((cond) != nullptr, (what))) \
            return s_;                                            \
    } while (0)

dmir::IngestOptions ingest_options_from_json(const char* text) {
    dmir::IngestOptions o;
    if (text == nullptr) return o;
    json j = json::parse(text);
    o.binarize_threshold = j.value("binarize_threshold", o.binarize_threshold);
    o.smoothing = j.value("smoothing", o.smoothing);
    o.n_buckets = j.value("n_buckets", o.n_buckets);
    o.neighbor_cap = j.value("neighbor_cap", o.neighbor_cap);
    return o;
}

dmir::EnvFitOptions env_options_from_json(const char* text) {
    dmir::EnvFitOptions o;
    if (text == nullptr) return o;
    json j = json::parse(text);
    o.rank = j.value("rank", o.rank);
    o.epochs = j.value("epochs", o.epochs);
    o.lr = j.value("lr", o.lr);
    o.negatives_per_positive = j.value("negatives_per_positive", o.negatives_per_positive);
    o.alpha = j.value("alpha", o.alpha);
    o.horizon = j.value("horizon", o.horizon);
    o.seed = j.value("seed", o.seed);
    return o;
}

dmir::TrainConfig train_config_from_json(const char* text) {
    if (text == nullptr) {
        dmir::TrainConfig c;
        return c;
    }
    return dmir::TrainConfig::from_json_text(text);
}

dmir::IdentConfig ident_config_from_json(const char* text) {
    dmir::IdentConfig c;
    if (text == nullptr) return c;
    json j = json::parse(text);
    c.n_u = j.value("n_u", c.n_u);
    c.n_c = j.value("n_c", c.n_c);
    c.regimes = j.value("regimes", c.regimes);
    c.users = j.value("users", c.users);
    c.horizon = j.value("horizon", c.horizon);
    c.n_items = j.value("n_items", c.n_items);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.train_steps = j.value("train_steps", c.train_steps);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.seeds = j.value("seeds", c.seeds);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

dmir::EvalOptions eval_options_from_json(const char* text) {
    dmir::EvalOptions o;
    if (text == nullptr) return o;
    json j = json::parse(text);
    if (j.contains("ks")) o.ks = j["ks"].get<std::vector<int>>();
    o.horizon = j.value("horizon", o.horizon);
    o.seeds = j.value("seeds", o.seeds);
    o.base_seed = j.value("base_seed", o.base_seed);
    if (j.contains("train"))
        o.train = dmir::TrainConfig::from_json_text(j["train"].dump());
    return o;
}

std::vector<std::string> split_csv_list(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        std::string part = text.substr(start, comma - start);
        if (!part.empty()) out.push_back(part);
        start = comma + 1;
    }
    return out;
}

void write_curves_csv(const std::vector<dmir::CurvePoint>& curves,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "phase,step,value\n";
    char buf[64];
    for (const auto& c : curves) {
        std::snprintf(buf, sizeof buf, "%.17g", c.value);
        out << c.phase << ',' << c.step << ',' << buf << '\n';
    }
}

}  // namespace

extern "C" {

const char* dmir_last_error(void) { return g_last_error.c_str(); }

const char* dmir_version(void) { return "1.0.0"; }

dmir_status dmir_dataset_ingest(const char* interactions_csv_path,
                                const char* trust_csv_path, const char* options_json,
                                dmir_dataset** out) {
    DMIR_REQUIRE(interactions_csv_path, "interactions_csv_path");
    DMIR_REQUIRE(out, "out");
    return wrap([&] {
        auto opt = ingest_options_from_json(options_json);
        auto parsed = dmir::parse_interactions(interactions_csv_path,
                                               opt.binarize_threshold);
        std::vector<dmir::TrustEdge> edges;
        if (trust_csv_path != nullptr)
            edges = dmir::parse_trust(trust_csv_path, parsed.user_id_map);
        auto handle = new dmir_dataset{
            dmir::build_dataset(std::move(parsed), edges, opt), std::move(edges), opt};
        *out = handle;
    });
}

dmir_status dmir_dataset_open(const char* dir, dmir_dataset** out) {
    DMIR_REQUIRE(dir, "dir");
    DMIR_REQUIRE(out, "out");
    return wrap([&] {
        auto loaded = dmir::load_dataset(dir);
        *out = new dmir_dataset{std::move(loaded.dataset), std::move(loaded.edges),
                                loaded.options};
    });
}

dmir_status dmir_dataset_save(const dmir_dataset* ds, const char* dir) {
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(dir, "dir");
    return wrap([&] { dmir::save_dataset(ds->ds, ds->edges, ds->options, dir); });
}

dmir_status dmir_dataset_counts(const dmir_dataset* ds, int32_t* n_users,
                                int32_t* n_items, int64_t* n_records) {
    DMIR_REQUIRE(ds, "ds");
    if (n_users != nullptr) *n_users = ds->ds.n_users;
    if (n_items != nullptr) *n_items = ds->ds.n_items;
    if (n_records != nullptr) *n_records = int64_t(ds->ds.n_records());
    return DMIR_OK;
}

dmir_status dmir_dataset_split(const dmir_dataset* ds, double ratio,
                               dmir_dataset** train, dmir_dataset** test) {
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(train, "train");
    DMIR_REQUIRE(test, "test");
    return wrap([&] {
        auto [a, b] = dmir::split_train_test(ds->ds, ratio);
        *train = new dmir_dataset{std::move(a), ds->edges, ds->options};
        *test = new dmir_dataset{std::move(b), ds->edges, ds->options};
    });
}

void dmir_dataset_close(dmir_dataset* ds) { delete ds; }

dmir_status dmir_synth_write(const char* options_json, const char* dir) {
    DMIR_REQUIRE(dir, "dir");
    return wrap([&] {
        auto opt = options_json == nullptr
                       ? dmir::SynthDataOptions{}
                       : dmir::SynthDataOptions::from_json(options_json);
        dmir::save_synthetic_data(dmir::make_synthetic_data(opt), dir);
    });
}

dmir_status dmir_env_fit(const dmir_dataset* ds, const char* options_json,
                         dmir_env** out) {
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(out, "out");
    return wrap([&] {
        auto opt = env_options_from_json(options_json);
        *out = new dmir_env{dmir::GroundTruthEnv::fit(ds->ds, opt)};
    });
}

dmir_status dmir_env_open(const char* dir, dmir_env** out) {
    DMIR_REQUIRE(dir, "dir");
    DMIR_REQUIRE(out, "out");
    return wrap([&] { *out = new dmir_env{dmir::GroundTruthEnv::load(dir)}; });
}

dmir_status dmir_env_save(const dmir_env* env, const char* dir) {
    DMIR_REQUIRE(env, "env");
    DMIR_REQUIRE(dir, "dir");
    return wrap([&] { env->env.save(dir); });
}

dmir_status dmir_env_accept_probability(const dmir_env* env, int32_t user, int32_t item,
                                        double* out) {
    DMIR_REQUIRE(env, "env");
    DMIR_REQUIRE(out, "out");
    return wrap([&] { *out = env->env.accept_probability(user, item); });
}

dmir_status dmir_env_step(dmir_env* env, int32_t user, int32_t item, int32_t* feedback,
                          double* accept_probability) {
    DMIR_REQUIRE(env, "env");
    return wrap([&] {
        auto r = env->env.step(user, item);
        if (feedback != nullptr) *feedback = r.feedback;
        if (accept_probability != nullptr) *accept_probability = r.accept_probability;
    });
}

dmir_status dmir_env_reset(dmir_env* env, int32_t user) {
    DMIR_REQUIRE(env, "env");
    return wrap([&] { env->env.reset(user); });
}

dmir_status dmir_env_reseed(dmir_env* env, uint64_t seed) {
    DMIR_REQUIRE(env, "env");
    env->env.reseed(seed);
    return DMIR_OK;
}

void dmir_env_close(dmir_env* env) { delete env; }

dmir_status dmir_world_model_open(const char* checkpoint_path, dmir_world_model** out) {
    DMIR_REQUIRE(checkpoint_path, "checkpoint_path");
    DMIR_REQUIRE(out, "out");
    return wrap([&] {
        *out = new dmir_world_model{dmir::WorldModel::load(checkpoint_path)};
    });
}

dmir_status dmir_world_model_save(const dmir_world_model* wm, const char* path) {
    DMIR_REQUIRE(wm, "wm");
    DMIR_REQUIRE(path, "path");
    return wrap([&] { wm->wm.save(path); });
}

dmir_status dmir_pretrain(const dmir_dataset* ds, const char* config_json, int32_t steps,
                          const char* checkpoint_path, const char* curves_csv_path,
                          dmir_world_model** out) {
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(checkpoint_path, "checkpoint_path");
    return wrap([&] {
        auto cfg = train_config_from_json(config_json);
        dmir::WorldModelConfig wc;
        wc.dim = cfg.dim;
        wc.n_users = ds->ds.n_users;
        wc.n_items = ds->ds.n_items;
        wc.droprate = cfg.droprate;
        wc.n_samples = cfg.n_samples;
        wc.seed = cfg.seed;
        dmir::WorldModel wm(wc);
        dmir::Trainer trainer(ds->ds, cfg);
        std::vector<dmir::CurvePoint> curves;
        trainer.pretrain_world_model(wm, steps > 0 ? steps : cfg.k_c, curves);
        wm.save(checkpoint_path);
        if (curves_csv_path != nullptr) write_curves_csv(curves, curves_csv_path);
        if (out != nullptr) *out = new dmir_world_model{std::move(wm)};
    });
}

dmir_status dmir_world_model_predict(dmir_world_model* wm, const dmir_dataset* ds,
                                     int32_t user, int32_t item, int32_t n_samples,
                                     uint64_t seed, double* out) {
    DMIR_REQUIRE(wm, "wm");
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(out, "out");
    return wrap([&] {
        if (user < 0 || user >= ds->ds.n_users)
            throw std::invalid_argument("predict: user out of range");
        if (item < 0 || item >= ds->ds.n_items)
            throw std::invalid_argument("predict: item out of range");
        std::vector<dmir::WmObs> history;
        const auto& recs = ds->ds.by_user[std::size_t(user)];
        history.reserve(recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i)
            history.push_back(dmir::make_obs(ds->ds, user, i));
        auto pop = dmir::pop_features(ds->ds.popularity.buckets.back(), item);
        dmir::Rng rng(seed);
        *out = wm->wm.debiased_feedback(history, item, pop,
                                        n_samples > 0 ? n_samples : 1, rng);
    });
}

void dmir_world_model_close(dmir_world_model* wm) { delete wm; }

dmir_status dmir_train_run(const dmir_dataset* ds, const char* config_json,
                           const char* out_dir) {
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(out_dir, "out_dir");
    return wrap([&] {
        auto cfg = train_config_from_json(config_json);
        dmir::Trainer trainer(ds->ds, cfg);
        trainer.run(out_dir);
    });
}

dmir_status dmir_eval_run(const dmir_dataset* ds, const dmir_env* env,
                          const char* variants, const char* options_json,
                          const char* out_dir) {
    DMIR_REQUIRE(ds, "ds");
    DMIR_REQUIRE(env, "env");
    DMIR_REQUIRE(variants, "variants");
    DMIR_REQUIRE(out_dir, "out_dir");
    return wrap([&] {
        auto names = split_csv_list(variants);
        if (names.empty()) throw std::invalid_argument("eval: no variants given");
        auto opt = eval_options_from_json(options_json);
        std::vector<dmir::MetricReport> reports;
        for (const auto& name : names)
            reports.push_back(dmir::run_eval(dmir::variant_from_string(name), ds->ds,
                                             env->env, opt));
        dmir::emit_report(reports, out_dir);
    });
}

dmir_status dmir_ident_bench_run(const char* config_json, const char* out_json_path) {
    DMIR_REQUIRE(out_json_path, "out_json_path");
    return wrap([&] {
        auto cfg = ident_config_from_json(config_json);
        auto report = dmir::run_ident_bench(cfg);
        dmir::write_recovery(report, out_json_path);
    });
}

const char* dmir_reference_results(void) {
    static const std::string table = dmir::reference_results();
    return table.c_str();
}

}  // extern "C"
