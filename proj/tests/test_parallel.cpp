// The parallel kernels must agree bitwise with their serial references at
// every thread count: batch gradient accumulation, the censoring-weighted
// concordance, and the percentile bootstrap all reduce per-item partials in
// a fixed order, so thread scheduling cannot leak into results.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <omp.h>

#include "doctest.h"

#include "priorisk/core.hpp"
#include "priorisk/metrics.hpp"
#include "priorisk/model.hpp"
#include "priorisk/synthdata.hpp"

namespace pm = priorisk::metrics;
namespace sd = priorisk::synthdata;
namespace core = priorisk::core;
namespace model = priorisk::model;

namespace {

struct ThreadGuard {
    int saved;
    explicit ThreadGuard(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
    ~ThreadGuard() { omp_set_num_threads(saved); }
};

pm::RiskDataset random_dataset(std::uint64_t seed, std::size_t n, int horizon) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    pm::RiskDataset d;
    d.horizon = horizon;
    for (std::size_t i = 0; i < n; ++i) {
        pm::RiskSubject s;
        s.id = "s" + std::to_string(i);
        s.risk = normal(gen);
        s.time_years = 1 + static_cast<int>(gen() % static_cast<std::uint64_t>(horizon + 2));
        s.time_days = 365L * s.time_years;
        s.event = (gen() % 3u) != 0;
        s.scores_by_horizon.assign(static_cast<std::size_t>(horizon), s.risk);
        d.subjects.push_back(std::move(s));
    }
    return d;
}

}  // namespace

TEST_CASE("batch gradients are thread-count invariant") {
    sd::CohortConfig cfg;
    cfg.n_patients = 60;
    cfg.feature_dim = 12;
    cfg.seed = 8;
    auto cohort = sd::generate_cohort(cfg);

    model::ModelDims dims;
    dims.feature_dim = 12;
    dims.d_model = 8;
    dims.horizon = 4;

    for (model::Variant variant :
         {model::Variant::baseline, model::Variant::rp_plus, model::Variant::prime}) {
        auto params = model::ModelParams::seeded(dims, variant, 3);

        std::vector<model::Sample> batch;
        for (int row : cohort.sample_rows()) {
            model::Sample s;
            s.current = &cohort.exams[static_cast<std::size_t>(row)];
            s.prior = &cohort.priors_of(row).back();
            s.label = core::build_label(cohort.outcome_of(row), dims.horizon);
            batch.push_back(std::move(s));
        }
        REQUIRE(batch.size() > 30);

        std::vector<double> grad_serial(params.size());
        double loss_serial = model::batch_loss_grad_serial(batch, params, grad_serial);

        for (int threads : {1, 2, 4}) {
            ThreadGuard guard(threads);
            std::vector<double> grad(params.size());
            double loss = model::batch_loss_grad(batch, params, grad);
            CHECK(loss == loss_serial);
            CHECK(grad == grad_serial);  // element-wise bitwise equality
        }
    }
}

TEST_CASE("concordance is thread-count invariant") {
    auto data = random_dataset(41, 400, 6);
    auto serial = pm::uno_c_index_serial(data);
    REQUIRE_FALSE(serial.insufficient);

    for (int threads : {1, 2, 4}) {
        ThreadGuard guard(threads);
        auto parallel = pm::uno_c_index(data);
        CHECK(parallel.c == serial.c);
        CHECK(parallel.n_pairs == serial.n_pairs);
    }
}

TEST_CASE("bootstrap intervals are thread-count invariant") {
    auto data = random_dataset(42, 250, 6);
    auto stat = [](const pm::RiskDataset& d) {
        auto r = pm::uno_c_index_serial(d);
        return r.insufficient ? std::numeric_limits<double>::quiet_NaN() : r.c;
    };

    auto serial = pm::bootstrap_ci_serial(data, stat, 160, 77);

    for (int threads : {1, 2, 4}) {
        ThreadGuard guard(threads);
        auto parallel = pm::bootstrap_ci(data, stat, 160, 77);
        CHECK(parallel.lo == serial.lo);
        CHECK(parallel.hi == serial.hi);
        CHECK(parallel.used == serial.used);
        CHECK(parallel.dropped == serial.dropped);
    }
}
