#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "env/env.hpp"

using namespace dmir;

namespace {

LoggedDataset toy_dataset() {
    // user 0 likes item 0, dislikes item 1; several repeats for signal.
    ParsedInteractions parsed;
    parsed.user_id_map = {0};
    parsed.item_id_map = {0, 1};
    for (int i = 0; i < 20; ++i) {
        parsed.records.push_back({0, 0, 1, 10 + i});
        parsed.records.push_back({0, 1, 0, 10 + i});
    }
    IngestOptions opt;
    opt.n_buckets = 1;
    return build_dataset(parsed, {}, opt);
}

}  // namespace

TEST_CASE("fit_ground_truth ranks a liked item above a disliked one") {
    EnvFitOptions opt;
    opt.rank = 4;
    opt.epochs = 40;
    opt.seed = 7;
    opt.negatives_per_positive = 0;  // the toy set has explicit negatives
    auto env = GroundTruthEnv::fit(toy_dataset(), opt);
    CHECK(env.base_probability(0, 0) > env.base_probability(0, 1));
}

TEST_CASE("fit with zero epochs keeps the seeded initialization") {
    EnvFitOptions opt;
    opt.rank = 3;
    opt.epochs = 0;
    opt.seed = 11;
    auto a = GroundTruthEnv::fit(toy_dataset(), opt);
    opt.epochs = 5;
    auto b = GroundTruthEnv::fit(toy_dataset(), opt);
    // Same seed: same init; training must have moved something.
    bool moved = a.user_embeddings() != b.user_embeddings();
    CHECK(moved);
    auto c = GroundTruthEnv::fit(toy_dataset(), opt);
    CHECK(b.user_embeddings() == c.user_embeddings());  // determinism
    CHECK(b.item_embeddings() == c.item_embeddings());
}

TEST_CASE("fit on an empty dataset fails") {
    LoggedDataset empty;
    empty.n_users = 1;
    empty.n_items = 1;
    empty.by_user.resize(1);
    CHECK_THROWS(GroundTruthEnv::fit(empty, EnvFitOptions{}));
}

TEST_CASE("accept_probability applies the alpha^c decay law") {
    auto env = GroundTruthEnv::make(1, 1, 2, 0.9, 32, 0);
    // Orthogonal embeddings: sigmoid(0) = 0.5.
    env.user_embeddings() = {1.0, 0.0};
    env.item_embeddings() = {0.0, 1.0};
    CHECK(env.accept_probability(0, 0) == doctest::Approx(0.5));  // c = 0
    env.step(0, 0);
    env.step(0, 0);
    CHECK(env.exposure_count(0, 0) == 2);
    CHECK(env.accept_probability(0, 0) == doctest::Approx(0.5 * 0.81));
    CHECK_THROWS_AS(env.accept_probability(0, 5), std::out_of_range);
}

TEST_CASE("repeat decay is exactly alpha per repeat") {
    auto env = GroundTruthEnv::make(1, 1, 1, 0.8, 32, 3);
    env.user_embeddings() = {1.0};
    env.item_embeddings() = {0.7};
    double prev = env.accept_probability(0, 0);
    for (int k = 1; k <= 6; ++k) {
        env.step(0, 0);
        double cur = env.accept_probability(0, 0);
        CHECK(cur == doctest::Approx(prev * 0.8).epsilon(1e-12));
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("step samples Bernoulli feedback at the extremes") {
    SUBCASE("probability ~1 gives feedback 1") {
        auto env = GroundTruthEnv::make(1, 1, 1, 1.0, 1000, 1);
        env.user_embeddings() = {40.0};
        env.item_embeddings() = {1.0};
        for (int i = 0; i < 100; ++i) CHECK(env.step(0, 0).feedback == 1);
    }
    SUBCASE("probability ~0 rejects nearly always") {
        auto env = GroundTruthEnv::make(1, 1, 1, 1.0, 2000, 2);
        env.user_embeddings() = {-40.0};
        env.item_embeddings() = {1.0};
        int accepted = 0;
        for (int i = 0; i < 1000; ++i) accepted += env.step(0, 0).feedback;
        CHECK(double(accepted) / 1000.0 < 0.01);
    }
}

TEST_CASE("stepping past the horizon is an error") {
    auto env = GroundTruthEnv::make(1, 1, 1, 1.0, 2, 0);
    env.step(0, 0);
    env.step(0, 0);
    CHECK_THROWS(env.step(0, 0));
    env.reset(0);
    CHECK_NOTHROW(env.step(0, 0));
}

TEST_CASE("reset clears one user's counters and is idempotent") {
    auto env = GroundTruthEnv::make(2, 1, 1, 0.5, 32, 0);
    env.user_embeddings() = {1.0, 1.0};
    env.item_embeddings() = {1.0};
    double fresh = env.accept_probability(0, 0);
    env.step(0, 0);
    env.step(1, 0);
    env.reset(0);
    CHECK(env.accept_probability(0, 0) == doctest::Approx(fresh));
    CHECK(env.exposure_count(1, 0) == 1);  // user B untouched
    env.reset(0);
    CHECK(env.accept_probability(0, 0) == doctest::Approx(fresh));
}

TEST_CASE("seeded episodes replay identically and probabilities stay in [0,1]") {
    EnvFitOptions opt;
    opt.rank = 4;
    opt.epochs = 10;
    opt.seed = 21;
    auto ds = toy_dataset();
    auto run_episode = [&]() {
        auto env = GroundTruthEnv::fit(ds, opt);
        env.reseed(99);
        std::vector<int> transcript;
        for (int i = 0; i < 10; ++i) {
            auto res = env.step(0, i % 2);
            CHECK(res.accept_probability >= 0.0);
            CHECK(res.accept_probability <= 1.0);
            transcript.push_back(res.feedback);
        }
        return transcript;
    };
    CHECK(run_episode() == run_episode());
}

TEST_CASE("environment persists to env.json plus binary embeddings") {
    EnvFitOptions opt;
    opt.rank = 3;
    opt.epochs = 5;
    opt.seed = 5;
    auto env = GroundTruthEnv::fit(toy_dataset(), opt);
    std::string dir = "/tmp/dmir_env_test";
    std::filesystem::remove_all(dir);
    env.save(dir);
    auto loaded = GroundTruthEnv::load(dir);
    CHECK(loaded.n_users() == env.n_users());
    CHECK(loaded.alpha() == env.alpha());
    CHECK(loaded.user_embeddings() == env.user_embeddings());
    CHECK(loaded.item_embeddings() == env.item_embeddings());
    CHECK(loaded.base_probability(0, 0) == doctest::Approx(env.base_probability(0, 0)));
}
