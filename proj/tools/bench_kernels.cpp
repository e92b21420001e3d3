// Benchmarks the OpenMP kernels against their serial reference
// implementations: batch loss/gradient accumulation, censoring-weighted
// concordance, and the percentile bootstrap. Each kernel pair must agree
// bitwise (the parallel paths reduce per-item partials in a fixed order);
// the exit status is the number of disagreements, so the --quick mode
// doubles as a smoke test. Timings are best-of-N wall clock.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "priorisk/core.hpp"
#include "priorisk/metrics.hpp"
#include "priorisk/model.hpp"
#include "priorisk/rng.hpp"
#include "priorisk/synthdata.hpp"

namespace core = priorisk::core;
namespace metrics = priorisk::metrics;
namespace model = priorisk::model;
namespace synth = priorisk::synthdata;
using priorisk::mix_seed;

namespace {

using Clock = std::chrono::steady_clock;

double best_of(int reps, const std::function<void()>& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return best;
}

metrics::RiskDataset random_dataset(std::uint64_t seed, std::size_t n, int horizon) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    metrics::RiskDataset d;
    d.horizon = horizon;
    for (std::size_t i = 0; i < n; ++i) {
        metrics::RiskSubject s;
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

int report(const char* name, double serial_s, double parallel_s, bool agree) {
    std::printf("%-16s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
                1e3 * serial_s, 1e3 * parallel_s, serial_s / parallel_s,
                agree ? "bitwise equal" : "MISMATCH");
    return agree ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel benchmark"};
    bool quick = false;
    int reps = 5;
    int threads = 0;
    app.add_flag("--quick", quick, "small workloads (smoke-test mode)");
    app.add_option("--reps", reps, "timing repetitions, best-of")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "override the OpenMP thread count")
        ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    if (threads > 0) omp_set_num_threads(threads);
    std::printf("threads: %d\n", omp_get_max_threads());
    int failures = 0;

    {  // batch loss/gradient
        synth::CohortConfig cfg;
        cfg.n_patients = quick ? 120 : 600;
        cfg.seed = 21;
        auto cohort = synth::generate_cohort(cfg);

        model::ModelDims dims;
        dims.horizon = 8;
        auto params = model::ModelParams::seeded(dims, model::Variant::prime, 5);

        std::vector<model::Sample> batch;
        for (int row : cohort.sample_rows()) {
            model::Sample s;
            s.current = &cohort.exams[static_cast<std::size_t>(row)];
            s.prior = &cohort.priors_of(row).back();
            s.label = core::build_label(cohort.outcome_of(row), dims.horizon);
            batch.push_back(std::move(s));
        }

        std::vector<double> grad_s(params.size()), grad_p(params.size());
        double loss_s = 0.0, loss_p = 0.0;
        double ts = best_of(reps, [&] { loss_s = model::batch_loss_grad_serial(batch, params, grad_s); });
        double tp = best_of(reps, [&] { loss_p = model::batch_loss_grad(batch, params, grad_p); });
        bool agree = std::memcmp(&loss_s, &loss_p, sizeof loss_s) == 0 && grad_s == grad_p;
        std::printf("batch gradient: %zu samples, %zu params\n", batch.size(), params.size());
        failures += report("  grad", ts, tp, agree);
    }

    {  // concordance
        auto data = random_dataset(31, quick ? 1000 : 6000, 8);
        metrics::ConcordanceResult rs, rp;
        double ts = best_of(reps, [&] { rs = metrics::uno_c_index_serial(data); });
        double tp = best_of(reps, [&] { rp = metrics::uno_c_index(data); });
        bool agree = std::memcmp(&rs.c, &rp.c, sizeof rs.c) == 0 && rs.n_pairs == rp.n_pairs &&
                     rs.insufficient == rp.insufficient;
        std::printf("concordance: %zu subjects\n", data.subjects.size());
        failures += report("  uno_c", ts, tp, agree);
    }

    {  // bootstrap
        auto data = random_dataset(47, quick ? 300 : 800, 8);
        const int B = quick ? 80 : 400;
        // Serial statistic so the drivers, not nested regions, are compared.
        metrics::Statistic stat = [](const metrics::RiskDataset& d) {
            auto r = metrics::uno_c_index_serial(d);
            return r.insufficient ? std::numeric_limits<double>::quiet_NaN() : r.c;
        };
        metrics::BootstrapCI cs, cp;
        double ts = best_of(reps, [&] { cs = metrics::bootstrap_ci_serial(data, stat, B, 99); });
        double tp = best_of(reps, [&] { cp = metrics::bootstrap_ci(data, stat, B, 99); });
        bool agree = std::memcmp(&cs.lo, &cp.lo, sizeof cs.lo) == 0 &&
                     std::memcmp(&cs.hi, &cp.hi, sizeof cs.hi) == 0 && cs.used == cp.used &&
                     cs.dropped == cp.dropped;
        std::printf("bootstrap: %zu subjects, %d replicates\n", data.subjects.size(), B);
        failures += report("  bootstrap", ts, tp, agree);
    }

    if (failures > 0) std::printf("%d kernel(s) disagree with the serial reference\n", failures);
    return failures;
}
