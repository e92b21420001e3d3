#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "priorisk/model.hpp"
#include "priorisk/synthdata.hpp"

namespace priorisk::train {

struct TrainConfig {
    double lr0 = 0.005;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    int total_steps = 2000;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

// Single-cycle cosine schedule: lr0 * (1 + cos(pi * step/total)) / 2.
double cosine_lr(int step, int total_steps, double lr0);

// Classic momentum SGD with loss-coupled L2: g' = grad + wd * param,
// v' = momentum * v + g', param' = param - lr * v'.
void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, double lr, const TrainConfig& cfg);

struct HistoryRow {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;  // batch mean loss
};

struct TrainResult {
    model::ModelParams params;
    std::vector<HistoryRow> history;
    // A numeric failure mid-run stops training and rolls the parameters
    // back to the last step that completed cleanly.
    bool aborted = false;
    std::string abort_reason;
};

// Seeded minibatch SGD over the cohort's scoreable samples (exams with at
// least one prior). Priors are redrawn uniformly at random each time a
// sample is visited. Fully deterministic in (cohort, params0, cfg).
TrainResult run_training(const synthdata::Cohort& cohort, model::ModelParams params0,
                         const TrainConfig& cfg);

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

}  // namespace priorisk::train
