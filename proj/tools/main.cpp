// Command-line frontend; talks to the library exclusively through the C
// interface in dmir/dmir.h.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmir/dmir.h"

namespace {

using nlohmann::json;

int fail_with(dmir_status status, const std::string& what) {
    std::cerr << what << ": " << dmir_last_error() << " (status " << int(status)
              << ")\n";
    return 1;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

struct DatasetGuard {
    dmir_dataset* ptr = nullptr;
    ~DatasetGuard() { dmir_dataset_close(ptr); }
};
struct EnvGuard {
    dmir_env* ptr = nullptr;
    ~EnvGuard() { dmir_env_close(ptr); }
};
struct WmGuard {
    dmir_world_model* ptr = nullptr;
    ~WmGuard() { dmir_world_model_close(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dmir: debiased model-based interactive recommendation toolkit"};
    app.require_subcommand(1);

    // ---- make-data ----
    auto* make_data = app.add_subcommand(
        "make-data", "Generate the self-contained synthetic benchmark directory");
    std::string md_out;
    int md_users = 50, md_items = 100, md_rank = 16, md_horizon = 32, md_buckets = 12,
        md_neighbors = 4;
    double md_alpha = 0.99, md_embed = 0.5, md_quality = 1.5, md_repeat = 0.3;
    std::uint64_t md_seed = 0;
    make_data->add_option("--out", md_out, "Output directory")->required();
    make_data->add_option("--users", md_users);
    make_data->add_option("--items", md_items);
    make_data->add_option("--rank", md_rank);
    make_data->add_option("--horizon", md_horizon);
    make_data->add_option("--buckets", md_buckets);
    make_data->add_option("--neighbors", md_neighbors);
    make_data->add_option("--alpha", md_alpha);
    make_data->add_option("--embed-scale", md_embed);
    make_data->add_option("--quality-scale", md_quality);
    make_data->add_option("--repeat-prob", md_repeat);
    make_data->add_option("--seed", md_seed);

    // ---- ingest ----
    auto* ingest = app.add_subcommand(
        "ingest", "Build a canonical dataset directory from raw CSV files");
    std::string in_interactions, in_trust, in_out;
    double in_threshold = 4.0;
    int in_buckets = 12, in_cap = 50;
    ingest->add_option("--interactions", in_interactions, "user,item,rating,timestamp CSV")
        ->required();
    ingest->add_option("--trust", in_trust, "truster,trustee[,timestamp] CSV");
    ingest->add_option("--out", in_out, "Output dataset directory")->required();
    ingest->add_option("--threshold", in_threshold, "Rating binarization threshold");
    ingest->add_option("--buckets", in_buckets);
    ingest->add_option("--neighbor-cap", in_cap);

    // ---- fit-env ----
    auto* fit_env = app.add_subcommand(
        "fit-env", "Fit the simulated environment's ground truth on a dataset");
    std::string fe_data, fe_out;
    int fe_rank = 16, fe_epochs = 30, fe_horizon = 32;
    double fe_alpha = 0.9, fe_lr = 0.05;
    std::uint64_t fe_seed = 0;
    fit_env->add_option("--data", fe_data, "Dataset directory")->required();
    fit_env->add_option("--out", fe_out, "Output environment directory")->required();
    fit_env->add_option("--rank", fe_rank);
    fit_env->add_option("--alpha", fe_alpha);
    fit_env->add_option("--seed", fe_seed);
    fit_env->add_option("--epochs", fe_epochs);
    fit_env->add_option("--lr", fe_lr);
    fit_env->add_option("--horizon", fe_horizon);

    // ---- pretrain ----
    auto* pretrain = app.add_subcommand(
        "pretrain", "Train the world model on logged data and write a checkpoint");
    std::string pt_data, pt_config, pt_out = "world_model.ckpt", pt_curves;
    int pt_steps = 0;
    pretrain->add_option("--data", pt_data, "Dataset directory")->required();
    pretrain->add_option("--config", pt_config, "Training config JSON file");
    pretrain->add_option("--out", pt_out, "Checkpoint path");
    pretrain->add_option("--steps", pt_steps, "Step budget (0 = config's k_c)");
    pretrain->add_option("--curves", pt_curves, "Optional loss-curve CSV path");

    // ---- predict ----
    auto* predict = app.add_subcommand(
        "predict", "Debiased acceptance probability for a user/item pair");
    std::string pr_data, pr_ckpt;
    int pr_user = 0, pr_item = 0, pr_samples = 8;
    std::uint64_t pr_seed = 0;
    predict->add_option("--data", pr_data, "Dataset directory")->required();
    predict->add_option("--ckpt", pr_ckpt, "World-model checkpoint")->required();
    predict->add_option("--user", pr_user)->required();
    predict->add_option("--item", pr_item)->required();
    predict->add_option("--samples", pr_samples, "Monte-Carlo draws");
    predict->add_option("--seed", pr_seed);

    // ---- train ----
    auto* train = app.add_subcommand("train", "Run the full training loop");
    std::string tr_data, tr_config, tr_out;
    train->add_option("--data", tr_data, "Dataset directory")->required();
    train->add_option("--config", tr_config, "Training config JSON file")->required();
    train->add_option("--out", tr_out, "Run output directory")->required();

    // ---- eval ----
    auto* eval = app.add_subcommand(
        "eval", "Train policy variants and evaluate them against the environment");
    std::string ev_data, ev_env, ev_out, ev_config;
    std::vector<std::string> ev_variants;
    std::vector<int> ev_ks = {20, 50};
    int ev_seeds = 5, ev_horizon = 32;
    std::uint64_t ev_base_seed = 0;
    eval->add_option("--data", ev_data, "Dataset directory")->required();
    eval->add_option("--env", ev_env, "Environment directory")->required();
    eval->add_option("--out", ev_out, "Report output directory")->required();
    eval->add_option("--variant", ev_variants,
                     "dmir | dmir-d | dqn-naive-neg | dqn+wm | random (repeatable)")
        ->required();
    eval->add_option("--k", ev_ks, "Ranking cutoffs");
    eval->add_option("--seeds", ev_seeds);
    eval->add_option("--horizon", ev_horizon);
    eval->add_option("--base-seed", ev_base_seed);
    eval->add_option("--config", ev_config, "Per-seed training config JSON file");

    // ---- ident-bench ----
    auto* ident = app.add_subcommand(
        "ident-bench", "Latent-recovery bench on synthetic data with known latents");
    std::string id_out = "recovery.json";
    int id_nu = 2, id_nc = 2, id_regimes = 5, id_seeds = 3, id_users = 80,
        id_horizon = 40, id_items = 6, id_dim = 8, id_steps = 3000, id_batch = 64;
    double id_lr = 0.01;
    std::uint64_t id_seed = 0;
    ident->add_option("--nu", id_nu, "User-preference latent dimension");
    ident->add_option("--nc", id_nc, "Context latent dimension");
    ident->add_option("--regimes", id_regimes, "Distinct social-graph regimes");
    ident->add_option("--seeds", id_seeds);
    ident->add_option("--users", id_users);
    ident->add_option("--horizon", id_horizon);
    ident->add_option("--items", id_items);
    ident->add_option("--model-dim", id_dim);
    ident->add_option("--steps", id_steps, "Training steps per seed");
    ident->add_option("--lr", id_lr);
    ident->add_option("--batch", id_batch);
    ident->add_option("--seed", id_seed);
    ident->add_option("--out", id_out, "Recovery report path");

    // ---- reference ----
    auto* reference = app.add_subcommand(
        "reference", "Print published full-scale reference numbers (display only)");

    CLI11_PARSE(app, argc, argv);

    if (make_data->parsed()) {
        json j{{"users", md_users},         {"items", md_items},
               {"rank", md_rank},           {"horizon", md_horizon},
               {"n_buckets", md_buckets},   {"neighbors_per_user", md_neighbors},
               {"alpha", md_alpha},         {"embed_scale", md_embed},
               {"quality_scale", md_quality}, {"repeat_prob", md_repeat},
               {"seed", md_seed}};
        if (auto s = dmir_synth_write(j.dump().c_str(), md_out.c_str()))
            return fail_with(s, "make-data");
        std::cout << "wrote " << md_out << "\n";
        return 0;
    }

    if (ingest->parsed()) {
        json j{{"binarize_threshold", in_threshold},
               {"n_buckets", in_buckets},
               {"neighbor_cap", in_cap}};
        DatasetGuard ds;
        if (auto s = dmir_dataset_ingest(in_interactions.c_str(),
                                         in_trust.empty() ? nullptr : in_trust.c_str(),
                                         j.dump().c_str(), &ds.ptr))
            return fail_with(s, "ingest");
        if (auto s = dmir_dataset_save(ds.ptr, in_out.c_str()))
            return fail_with(s, "ingest: save");
        int32_t nu = 0, ni = 0;
        int64_t nr = 0;
        dmir_dataset_counts(ds.ptr, &nu, &ni, &nr);
        std::cout << "wrote " << in_out << " (" << nu << " users, " << ni << " items, "
                  << nr << " records)\n";
        return 0;
    }

    if (fit_env->parsed()) {
        DatasetGuard ds;
        if (auto s = dmir_dataset_open(fe_data.c_str(), &ds.ptr))
            return fail_with(s, "fit-env: open dataset");
        json j{{"rank", fe_rank}, {"alpha", fe_alpha}, {"seed", fe_seed},
               {"epochs", fe_epochs}, {"lr", fe_lr}, {"horizon", fe_horizon}};
        EnvGuard env;
        if (auto s = dmir_env_fit(ds.ptr, j.dump().c_str(), &env.ptr))
            return fail_with(s, "fit-env");
        if (auto s = dmir_env_save(env.ptr, fe_out.c_str()))
            return fail_with(s, "fit-env: save");
        std::cout << "wrote " << fe_out << "\n";
        return 0;
    }

    if (pretrain->parsed()) {
        DatasetGuard ds;
        if (auto s = dmir_dataset_open(pt_data.c_str(), &ds.ptr))
            return fail_with(s, "pretrain: open dataset");
        std::string cfg = pt_config.empty() ? "{}" : read_file(pt_config);
        if (auto s = dmir_pretrain(ds.ptr, cfg.c_str(), pt_steps, pt_out.c_str(),
                                   pt_curves.empty() ? nullptr : pt_curves.c_str(),
                                   nullptr))
            return fail_with(s, "pretrain");
        std::cout << "wrote " << pt_out << "\n";
        return 0;
    }

    if (predict->parsed()) {
        DatasetGuard ds;
        WmGuard wm;
        if (auto s = dmir_dataset_open(pr_data.c_str(), &ds.ptr))
            return fail_with(s, "predict: open dataset");
        if (auto s = dmir_world_model_open(pr_ckpt.c_str(), &wm.ptr))
            return fail_with(s, "predict: open checkpoint");
        double p = 0;
        if (auto s = dmir_world_model_predict(wm.ptr, ds.ptr, pr_user, pr_item,
                                              pr_samples, pr_seed, &p))
            return fail_with(s, "predict");
        std::printf("%.6f\n", p);
        return 0;
    }

    if (train->parsed()) {
        DatasetGuard ds;
        if (auto s = dmir_dataset_open(tr_data.c_str(), &ds.ptr))
            return fail_with(s, "train: open dataset");
        std::string cfg = read_file(tr_config);
        if (auto s = dmir_train_run(ds.ptr, cfg.c_str(), tr_out.c_str()))
            return fail_with(s, "train");
        std::cout << "wrote " << tr_out << "/manifest.json\n";
        return 0;
    }

    if (eval->parsed()) {
        DatasetGuard ds;
        EnvGuard env;
        if (auto s = dmir_dataset_open(ev_data.c_str(), &ds.ptr))
            return fail_with(s, "eval: open dataset");
        if (auto s = dmir_env_open(ev_env.c_str(), &env.ptr))
            return fail_with(s, "eval: open environment");
        json j{{"ks", ev_ks}, {"horizon", ev_horizon}, {"seeds", ev_seeds},
               {"base_seed", ev_base_seed}};
        if (!ev_config.empty()) j["train"] = json::parse(read_file(ev_config));
        std::string variants;
        for (std::size_t i = 0; i < ev_variants.size(); ++i) {
            if (i) variants += ',';
            variants += ev_variants[i];
        }
        if (auto s = dmir_eval_run(ds.ptr, env.ptr, variants.c_str(), j.dump().c_str(),
                                   ev_out.c_str()))
            return fail_with(s, "eval");
        std::cout << "wrote " << ev_out << "/report.json\n";
        return 0;
    }

    if (ident->parsed()) {
        json j{{"n_u", id_nu},       {"n_c", id_nc},           {"regimes", id_regimes},
               {"seeds", id_seeds},  {"users", id_users},      {"horizon", id_horizon},
               {"n_items", id_items}, {"model_dim", id_dim},
               {"train_steps", id_steps}, {"lr", id_lr},       {"batch", id_batch},
               {"seed", id_seed}};
        if (auto s = dmir_ident_bench_run(j.dump().c_str(), id_out.c_str()))
            return fail_with(s, "ident-bench");
        std::cout << "wrote " << id_out << "\n";
        return 0;
    }

    if (reference->parsed()) {
        std::cout << dmir_reference_results();
        return 0;
    }

    return 0;
}
