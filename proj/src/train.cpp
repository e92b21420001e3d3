#include "priorisk/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "priorisk/errors.hpp"
#include "priorisk/rng.hpp"

namespace priorisk::train {

void TrainConfig::validate() const {
    if (!std::isfinite(lr0) || lr0 < 0.0) throw ConfigError("lr0 must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!std::isfinite(weight_decay) || weight_decay < 0.0)
        throw ConfigError("weight_decay must be >= 0");
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double cosine_lr(int step, int total_steps, double lr0) {
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (step < 0 || step > total_steps)
        throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + "]");
    double phase = std::numbers::pi * static_cast<double>(step) / total_steps;
    return lr0 * (1.0 + std::cos(phase)) / 2.0;
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, double lr, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw ConfigError("sgd_step: parameter/gradient/velocity sizes differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i] + cfg.weight_decay * params[i];
        velocity[i] = cfg.momentum * velocity[i] + g;
        params[i] -= lr * velocity[i];
        if (!std::isfinite(params[i])) throw NumericError("sgd_step: non-finite parameter");
    }
}

TrainResult run_training(const synthdata::Cohort& cohort, model::ModelParams params0,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (cohort.feature_dim != params0.dims().feature_dim)
        throw DataError("cohort feature width " + std::to_string(cohort.feature_dim) +
                        " does not match model feature_dim " +
                        std::to_string(params0.dims().feature_dim));
    const std::vector<int> rows = cohort.sample_rows();
    if (rows.empty()) throw DataError("training needs at least one exam with a prior");

    TrainResult result{std::move(params0), {}, false, {}};
    result.history.reserve(cfg.total_steps);

    Rng rng(mix_seed(cfg.seed, 0x747261696eULL));  // batch rows + prior draws
    const int horizon = result.params.dims().horizon;
    std::vector<double> grad(result.params.size());
    std::vector<double> velocity(result.params.size(), 0.0);
    std::vector<double> last_good(result.params.flat().begin(), result.params.flat().end());
    std::vector<model::Sample> batch(cfg.batch_size);

    for (int step = 0; step < cfg.total_steps; ++step) {
        // batch assembly stays serial so the random stream is consumed in
        // a fixed order regardless of thread count
        for (int b = 0; b < cfg.batch_size; ++b) {
            int row = rows[rng.uniform_index(rows.size())];
            const auto& current = cohort.exams[row];
            const auto& prior = core::pair_prior_training(current, cohort.priors_of(row), rng);
            batch[b] = {&current, &prior, core::build_label(cohort.outcome_of(row), horizon)};
        }
        double lr = cosine_lr(step, cfg.total_steps, cfg.lr0);
        try {
            double loss = model::batch_loss_grad(batch, result.params, grad);
            // the step consumes the batch-mean gradient so the learning
            // rate is independent of batch size
            for (double& g : grad) g /= cfg.batch_size;
            sgd_step(result.params.flat(), grad, velocity, lr, cfg);
            result.history.push_back({step, lr, loss / cfg.batch_size});
        } catch (const NumericError& e) {
            std::copy(last_good.begin(), last_good.end(), result.params.flat().begin());
            result.aborted = true;
            result.abort_reason = e.what();
            break;
        }
        std::copy(result.params.flat().begin(), result.params.flat().end(), last_good.begin());
    }
    return result;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "step,lr,loss\n";
    char buf[80];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.step, row.lr, row.loss);
        out << buf;
    }
    if (!out) throw DataError("failed writing " + path);
}

}  // namespace priorisk::train
