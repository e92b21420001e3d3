#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "priorisk/core.hpp"

namespace priorisk::synthdata {

// Synthetic cohort generator. Each patient gets a short series of exams;
// density categories evolve through a Markov transition matrix and a
// low-dimensional latent texture performs a random walk. The per-exam
// event rate rises with density, with a density-category change since the
// previous exam, and with the latent texture drift magnitude, so models
// that can compare prior and current exams hold a real advantage.
struct CohortConfig {
    int n_patients = 1333;
    int min_exams = 2;
    int max_exams = 3;
    int feature_dim = 32;
    int texture_dim = 3;

    // initial density distribution and per-category transition rows; the
    // extreme categories are sticky and the middle ones volatile, so the
    // prior category carries real information about change risk
    std::array<double, 4> init_density{0.15, 0.40, 0.35, 0.10};
    std::array<std::array<double, 4>, 4> density_transition{{
        {0.92, 0.060, 0.015, 0.005},
        {0.25, 0.500, 0.200, 0.050},
        {0.05, 0.200, 0.500, 0.250},
        {0.005, 0.015, 0.060, 0.92},
    }};

    // log-hazard effects
    std::array<double, 4> beta_density{0.0, 0.25, 0.60, 1.10};
    double beta_change = 2.2;   // bump when the density category changed
    double beta_texture = 1.5;  // weight on the latent texture drift norm
    double lambda0 = 0.004;     // baseline yearly event rate

    // Administrative censoring sits one inter-exam gap past the eight-year
    // mark so that discrimination at an eight-year horizon still has genuine
    // survivors on the control side.
    long admin_horizon_day = 3300;
    long min_gap_days = 300;        // inter-exam spacing, roughly annual
    long max_gap_days = 450;
    long first_exam_day_max = 90;

    // The latent texture lives on a sphere of fixed radius and performs an
    // angular random walk: most steps are small, but occasionally the
    // texture shifts by a large angle. The fixed radius keeps any single
    // exam uninformative about the drift — only comparing the two positions
    // reveals how far the texture moved between exams.
    double texture_radius = 2.0;
    double texture_step_sd = 0.15;
    double texture_jump_prob = 0.35;
    double texture_jump_sd = 1.5;
    double feature_noise_sd = 0.35;
    double density_embed_scale = 0.7;

    // Population-level fixtures (the density embedding geometry and the
    // texture-to-feature mixing map) are drawn from population_seed, so
    // cohorts sampled with different seeds still share feature semantics
    // and a model trained on one cohort is scoreable on another.
    std::uint64_t population_seed = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Exams grouped by patient and time-ordered within each patient, with
// aligned per-exam outcome columns. outcome_day counts days from the exam
// to the event (event[i] true) or to administrative censoring.
struct Cohort {
    int feature_dim = 0;
    std::vector<core::ExamRecord> exams;
    std::vector<char> event;
    std::vector<long> outcome_day;
    std::vector<double> true_hazard;  // generator ground truth; NaN when unknown
    std::vector<int> patient_start;   // index of the first exam of exam i's patient

    std::size_t size() const { return exams.size(); }

    // earlier exams of the same patient (possibly empty)
    std::span<const core::ExamRecord> priors_of(int i) const;

    // rows with at least one prior: the scoreable samples
    std::vector<int> sample_rows() const;

    core::SurvivalOutcome outcome_of(int i) const;  // years = ceil(days / 365)

    void rebuild_patient_index();  // recompute patient_start from exam order
};

int years_from_days(long days);

Cohort generate_cohort(const CohortConfig& cfg);

struct GroupTags {
    core::DensityChange change = core::DensityChange::no_change;
    core::DensityLevel level = core::DensityLevel::fatty;
};

// Tags one scoreable row against its inference-paired (closest) prior.
GroupTags tag_sample(const Cohort& cohort, int row);

// Tags for every scoreable row, as (row index, tags).
std::vector<std::pair<int, GroupTags>> tag_groups(const Cohort& cohort);

// Column schema: patient_id,exam_id,acquisition_day,density,event,
// outcome_day,feature_0..feature_{D-1}. Doubles printed with %.17g so a
// write/load round trip is lossless.
void write_csv(const Cohort& cohort, const std::string& path);
Cohort load_csv(const std::string& path);

// Sidecar with the generator's true per-exam rates: exam_id,true_hazard.
void write_oracle_csv(const Cohort& cohort, const std::string& path);
void load_oracle_csv(Cohort& cohort, const std::string& path);

// Structured config file (JSON object mirroring CohortConfig fields).
CohortConfig cohort_config_from_json_file(const std::string& path);
void write_cohort_config_json(const CohortConfig& cfg, const std::string& path);

}  // namespace priorisk::synthdata
