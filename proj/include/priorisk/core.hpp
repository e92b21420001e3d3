#pragma once

#include <span>
#include <string>
#include <vector>

#include "priorisk/rng.hpp"

namespace priorisk::core {

// BI-RADS breast composition category.
enum class Density : int { A = 0, B = 1, C = 2, D = 3 };

char density_letter(Density d);
Density density_from_letter(char c);

// A and B count as fatty, C and D as dense.
enum class DensityLevel { fatty, dense };
// Whether the category differs between the paired prior and current exam.
enum class DensityChange { change, no_change };

DensityLevel density_level(Density d);

// One imaging exam. acquisition_day counts days since the cohort epoch.
struct ExamRecord {
    std::string patient_id;
    std::string exam_id;
    long acquisition_day = 0;
    std::vector<double> features;
    Density density = Density::A;
};

// Throws DataError if features are not exactly dim finite entries or the
// acquisition day is negative.
void validate_exam(const ExamRecord& exam, int feature_dim);

// Event flag plus the year of diagnosis (event) or censoring (no event).
struct SurvivalOutcome {
    bool event = false;
    int time_years = 1;
};

// Ground-truth cumulative indicator h and loss-inclusion mask over
// horizons 1..T. h is nondecreasing; for censored outcomes the mask is
// nonincreasing and h is identically zero.
struct LabelPair {
    std::vector<double> h;
    std::vector<double> mask;
};

// Event at year t_e: h(t) = 1 iff t >= t_e, mask all ones.
// Censored at year C: h = 0, mask(t) = 1 iff t < C (strict).
LabelPair build_label(const SurvivalOutcome& outcome, int horizon);

// Training-time pairing: one prior chosen uniformly at random.
// Preconditions (checked): priors nonempty, all strictly earlier than
// current, same patient.
const ExamRecord& pair_prior_training(const ExamRecord& current,
                                      std::span<const ExamRecord> priors, Rng& rng);
const ExamRecord& pair_prior_training(const ExamRecord& current,
                                      std::span<const ExamRecord> priors,
                                      std::uint64_t rng_seed);

// Inference-time pairing: the prior with the largest acquisition day;
// ties broken by lexically smallest exam_id.
const ExamRecord& pair_prior_inference(const ExamRecord& current,
                                       std::span<const ExamRecord> priors);

}  // namespace priorisk::core
