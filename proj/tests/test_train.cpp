#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "priorisk/errors.hpp"
#include "priorisk/model.hpp"
#include "priorisk/synthdata.hpp"
#include "priorisk/train.hpp"

using namespace priorisk;
using train::TrainConfig;

namespace {

synthdata::Cohort tiny_cohort(std::uint64_t seed = 9, int patients = 60) {
    synthdata::CohortConfig cfg;
    cfg.n_patients = patients;
    cfg.seed = seed;
    return synthdata::generate_cohort(cfg);
}

model::ModelParams tiny_params(model::Variant variant, std::uint64_t seed, int horizon = 3) {
    model::ModelDims dims;
    dims.feature_dim = 32;
    dims.d_model = 8;
    dims.n_heads = 2;
    dims.n_tokens = 4;
    dims.horizon = horizon;
    return model::ModelParams::seeded(dims, variant, seed);
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(train::cosine_lr(0, 1000, 0.005) == 0.005);
    CHECK(train::cosine_lr(1000, 1000, 0.005) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(train::cosine_lr(500, 1000, 0.005) == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK_THROWS_AS(train::cosine_lr(1001, 1000, 0.005), ConfigError);
}

TEST_CASE("cosine schedule is nonincreasing over the whole run") {
    double prev = train::cosine_lr(0, 333, 0.01);
    for (int s = 1; s <= 333; ++s) {
        double lr = train::cosine_lr(s, 333, 0.01);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("sgd_step: zero gradient and zero velocity change nothing") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    std::vector<double> params{1.0, -2.0, 3.0};
    std::vector<double> grads(3, 0.0);
    std::vector<double> velocity(3, 0.0);
    train::sgd_step(params, grads, velocity, 0.1, cfg);
    CHECK(params == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("sgd_step: momentum 0 and no decay is plain gradient descent") {
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    std::vector<double> params{1.0, 2.0};
    std::vector<double> grads{0.5, -1.0};
    std::vector<double> velocity{0.0, 0.0};
    train::sgd_step(params, grads, velocity, 0.1, cfg);
    CHECK(params[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
    CHECK(params[1] == doctest::Approx(2.0 + 0.1 * 1.0).epsilon(1e-15));
}

TEST_CASE("sgd_step: two momentum steps on a constant gradient displace by lr*g*(1+1.9)") {
    TrainConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    const double lr = 0.01, g = 2.0;
    std::vector<double> params{5.0};
    std::vector<double> grads{g};
    std::vector<double> velocity{0.0};
    train::sgd_step(params, grads, velocity, lr, cfg);  // v=g, p -= lr*g
    train::sgd_step(params, grads, velocity, lr, cfg);  // v=1.9g, p -= lr*1.9g
    CHECK(params[0] == doctest::Approx(5.0 - lr * g * (1.0 + 1.9)).epsilon(1e-12));
}

TEST_CASE("sgd_step couples weight decay into the gradient") {
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.5;
    std::vector<double> params{2.0};
    std::vector<double> grads{0.0};
    std::vector<double> velocity{0.0};
    train::sgd_step(params, grads, velocity, 0.1, cfg);
    // g' = 0 + 0.5*2 = 1; p = 2 - 0.1*1
    CHECK(params[0] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr0 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.weight_decay = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.total_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("run_training: lr0 = 0 is a parameter fixed point") {
    auto cohort = tiny_cohort();
    auto params0 = tiny_params(model::Variant::prime, 1);
    auto before = std::vector<double>(params0.flat().begin(), params0.flat().end());
    TrainConfig cfg;
    cfg.lr0 = 0.0;
    cfg.total_steps = 25;
    auto result = train::run_training(cohort, std::move(params0), cfg);
    CHECK_FALSE(result.aborted);
    auto after = result.params.flat();
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == before[i]);
}

TEST_CASE("run_training: identical seeds give identical history and parameters") {
    auto cohort = tiny_cohort();
    TrainConfig cfg;
    cfg.total_steps = 40;
    cfg.seed = 123;
    auto r1 = train::run_training(cohort, tiny_params(model::Variant::prime, 5), cfg);
    auto r2 = train::run_training(cohort, tiny_params(model::Variant::prime, 5), cfg);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].loss == r2.history[i].loss);  // bitwise
        CHECK(r1.history[i].lr == r2.history[i].lr);
    }
    auto a = r1.params.flat();
    auto b = r2.params.flat();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("run_training: different training seeds explore different minibatches") {
    auto cohort = tiny_cohort();
    TrainConfig cfg;
    cfg.total_steps = 10;
    cfg.seed = 1;
    auto r1 = train::run_training(cohort, tiny_params(model::Variant::prime, 5), cfg);
    cfg.seed = 2;
    auto r2 = train::run_training(cohort, tiny_params(model::Variant::prime, 5), cfg);
    CHECK(r1.history.back().loss != r2.history.back().loss);
}

TEST_CASE("run_training: history has one row per step and a cosine lr trace") {
    auto cohort = tiny_cohort();
    TrainConfig cfg;
    cfg.total_steps = 30;
    auto result = train::run_training(cohort, tiny_params(model::Variant::baseline, 2), cfg);
    REQUIRE(result.history.size() == 30);
    for (int s = 0; s < 30; ++s) {
        CHECK(result.history[s].step == s);
        CHECK(result.history[s].lr ==
              doctest::Approx(train::cosine_lr(s, 30, cfg.lr0)).epsilon(1e-15));
        CHECK(std::isfinite(result.history[s].loss));
    }
}

TEST_CASE("run_training: loss decreases on the default cohort") {
    // default generator, default training settings
    synthdata::CohortConfig gen_cfg;
    auto cohort = synthdata::generate_cohort(gen_cfg);
    model::ModelDims dims;  // defaults
    auto params0 = model::ModelParams::seeded(dims, model::Variant::prime, 7);
    TrainConfig cfg;  // 2000 steps, batch 32
    auto result = train::run_training(cohort, std::move(params0), cfg);
    CHECK_FALSE(result.aborted);
    REQUIRE(result.history.size() == 2000);
    // mean loss over the final 10% of steps sits below the first step's loss
    double tail = 0.0;
    for (int s = 1800; s < 2000; ++s) tail += result.history[s].loss;
    tail /= 200.0;
    CHECK(tail < result.history.front().loss);
}

TEST_CASE("run_training: a numeric blow-up aborts and rolls back cleanly") {
    auto cohort = tiny_cohort();
    auto params0 = tiny_params(model::Variant::prime, 3);
    TrainConfig cfg;
    cfg.lr0 = 1e18;  // guaranteed overflow within a few steps
    cfg.total_steps = 50;
    auto snapshot = std::vector<double>(params0.flat().begin(), params0.flat().end());
    auto result = train::run_training(cohort, std::move(params0), cfg);
    CHECK(result.aborted);
    CHECK_FALSE(result.abort_reason.empty());
    CHECK(result.history.size() < 50);
    // rolled-back parameters must be finite
    for (double v : result.params.flat()) CHECK(std::isfinite(v));
    (void)snapshot;
}

TEST_CASE("history CSV is written with one row per step") {
    auto cohort = tiny_cohort();
    TrainConfig cfg;
    cfg.total_steps = 12;
    auto result = train::run_training(cohort, tiny_params(model::Variant::rp_plus, 4), cfg);
    const std::string path = "test_train_history.tmp";
    train::write_history_csv(result.history, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    int rows = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!header_seen) {
            CHECK(line == "step,lr,loss");
            header_seen = true;
            continue;
        }
        ++rows;
    }
    CHECK(rows == 12);
    in.close();
    std::filesystem::remove(path);
}
