#include "priorisk/core.hpp"

#include <cmath>

#include "priorisk/errors.hpp"

namespace priorisk::core {

char density_letter(Density d) {
    return static_cast<char>('A' + static_cast<int>(d));
}

Density density_from_letter(char c) {
    if (c < 'A' || c > 'D')
        throw DataError(std::string("unknown density category '") + c + "'");
    return static_cast<Density>(c - 'A');
}

DensityLevel density_level(Density d) {
    return (d == Density::A || d == Density::B) ? DensityLevel::fatty : DensityLevel::dense;
}

void validate_exam(const ExamRecord& exam, int feature_dim) {
    if (static_cast<int>(exam.features.size()) != feature_dim)
        throw DataError("exam " + exam.exam_id + ": expected " + std::to_string(feature_dim) +
                        " features, got " + std::to_string(exam.features.size()));
    for (double v : exam.features)
        if (!std::isfinite(v))
            throw DataError("exam " + exam.exam_id + ": non-finite feature value");
    if (exam.acquisition_day < 0)
        throw DataError("exam " + exam.exam_id + ": negative acquisition day");
}

LabelPair build_label(const SurvivalOutcome& outcome, int horizon) {
    if (horizon < 1)
        throw ConfigError("label horizon must be >= 1, got " + std::to_string(horizon));
    if (outcome.time_years < 1)
        throw DataError("outcome time must be >= 1 year, got " +
                        std::to_string(outcome.time_years));

    LabelPair label;
    label.h.assign(horizon, 0.0);
    label.mask.assign(horizon, 0.0);
    for (int t = 1; t <= horizon; ++t) {
        if (outcome.event) {
            label.h[t - 1] = (t >= outcome.time_years) ? 1.0 : 0.0;
            label.mask[t - 1] = 1.0;
        } else {
            label.mask[t - 1] = (t < outcome.time_years) ? 1.0 : 0.0;
        }
    }
    return label;
}

namespace {

void check_priors(const ExamRecord& current, std::span<const ExamRecord> priors) {
    if (priors.empty())
        throw DataError("exam " + current.exam_id + ": no prior exam available");
    for (const auto& p : priors) {
        if (p.patient_id != current.patient_id)
            throw DataError("prior " + p.exam_id + " belongs to a different patient");
        if (p.acquisition_day >= current.acquisition_day)
            throw DataError("prior " + p.exam_id + " is not earlier than current exam " +
                            current.exam_id);
    }
}

}  // namespace

const ExamRecord& pair_prior_training(const ExamRecord& current,
                                      std::span<const ExamRecord> priors, Rng& rng) {
    check_priors(current, priors);
    return priors[rng.uniform_index(priors.size())];
}

const ExamRecord& pair_prior_training(const ExamRecord& current,
                                      std::span<const ExamRecord> priors,
                                      std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    return pair_prior_training(current, priors, rng);
}

const ExamRecord& pair_prior_inference(const ExamRecord& current,
                                       std::span<const ExamRecord> priors) {
    check_priors(current, priors);
    const ExamRecord* best = &priors[0];
    for (const auto& p : priors) {
        if (p.acquisition_day > best->acquisition_day ||
            (p.acquisition_day == best->acquisition_day && p.exam_id < best->exam_id))
            best = &p;
    }
    return *best;
}

}  // namespace priorisk::core
