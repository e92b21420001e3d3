#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "priorisk/core.hpp"

namespace priorisk::metrics {

// Right-continuous step function on [0, inf), value 1 before the first
// jump. Used for the Kaplan-Meier censoring-survival curve.
class StepFunction {
  public:
    StepFunction() = default;  // constant 1

    // jump times strictly ascending; values[k] holds on [times[k], times[k+1])
    StepFunction(std::vector<double> times, std::vector<double> values);

    double at(double t) const;    // G(t)
    double left(double t) const;  // left limit G(t-)

    const std::vector<double>& jump_times() const { return times_; }
    const std::vector<double>& jump_values() const { return values_; }

  private:
    std::vector<double> times_;
    std::vector<double> values_;
};

// Kaplan-Meier estimator of the censoring distribution: censorings
// (event=0) are the "deaths", events are the drop-outs. At-risk at time c
// counts subjects with T >= c.
StepFunction km_censoring_survival(std::span<const double> times, std::span<const char> events);

// One scored subject. risk ranks subjects for concordance;
// scores_by_horizon[t-1] is the predicted cumulative risk by year t.
struct RiskSubject {
    std::string id;
    double risk = 0.0;
    std::vector<double> scores_by_horizon;
    int time_years = 1;
    long time_days = 0;  // day-granular outcome time, used by the 180-day exclusion
    bool event = false;
    core::DensityChange change = core::DensityChange::no_change;
    core::DensityLevel level = core::DensityLevel::fatty;
};

struct RiskDataset {
    int horizon = 0;
    std::vector<RiskSubject> subjects;

    std::size_t size() const { return subjects.size(); }
    // Finite risks/scores, scores length == horizon, time_years >= 1.
    void validate() const;
};

// Concordance estimate. insufficient (with value NaN) when no comparable
// pair exists; n_pairs counts comparable pairs before weighting.
struct ConcordanceResult {
    double c = 0.0;
    bool insufficient = false;
    long n_pairs = 0;
};

// Censoring-weighted C-index: pairs (i, j) with e_i = 1, T_i < T_j, T_i < tau,
// weighted by G(T_i-)^-2; ties in risk count 0.5. tau < 0 means the dataset
// horizon. OpenMP over i with per-i partials reduced in index order, so the
// result is bitwise identical to uno_c_index_serial for any thread count.
ConcordanceResult uno_c_index(const RiskDataset& data, int tau = -1);
ConcordanceResult uno_c_index_serial(const RiskDataset& data, int tau = -1);

// Same statistic with an explicit risk vector (one entry per subject).
ConcordanceResult uno_c_index_scores(const RiskDataset& data, std::span<const double> risks,
                                     int tau = -1);

// Cumulative/dynamic AUC at year t: cases have an event by t, controls are
// event-free past t, censored by t drop out. Mann-Whitney with ties 0.5.
struct AucResult {
    double auc = 0.0;
    bool insufficient = false;
    long n_cases = 0;
    long n_controls = 0;
};

AucResult td_auc(const RiskDataset& data, int t);
// Same labels, caller-supplied scores (one per subject).
AucResult td_auc_scores(const RiskDataset& data, std::span<const double> scores, int t);

// Paired AUC comparison on common subjects via per-subject structural
// components and their empirical covariance. z = 0 when the variance of
// the difference vanishes; p is two-sided normal.
struct DeLongResult {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double z = 0.0;
    double p = 1.0;
};

DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const char> labels);

// Paired comparison of two censoring-weighted concordance estimators over
// the same subjects. The variance of c_a - c_b comes from the U-statistic
// projection of each estimator (per-subject influence values), with the
// censoring curve treated as fixed.
struct CompareCResult {
    double c_a = 0.0;
    double c_b = 0.0;
    double diff = 0.0;
    double var_diff = 0.0;
    double z = 0.0;
    double p = 1.0;
};

CompareCResult compare_c(const RiskDataset& data, std::span<const double> risks_a,
                         std::span<const double> risks_b, int tau = -1);

// Percentile bootstrap over subjects. The statistic sees the resampled
// dataset and returns NaN when it cannot be computed there; such
// replicates are dropped and counted. Replicates draw from independent
// RNG streams keyed by (seed, replicate), so the serial reference and the
// OpenMP version agree bitwise at any thread count.
// Throws DataError when every replicate is dropped.
struct BootstrapCI {
    double lo = 0.0;
    double hi = 0.0;
    int used = 0;
    int dropped = 0;
};

using Statistic = std::function<double(const RiskDataset&)>;

BootstrapCI bootstrap_ci(const RiskDataset& data, const Statistic& stat, int B,
                         std::uint64_t seed);
BootstrapCI bootstrap_ci_serial(const RiskDataset& data, const Statistic& stat, int B,
                                std::uint64_t seed);

// Point estimate with its bootstrap interval and cell bookkeeping.
struct EstimateCI {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    long n_cases = 0;
    long n_controls = 0;
    long n_pairs = 0;  // comparable pairs (concordance cells only)
    bool insufficient = false;
    int dropped_replicates = 0;
};

// Evaluation bundle for one dataset: C-index at the max horizon plus
// td-AUC per year, each with a percentile bootstrap CI. p_values is
// filled by comparison drivers, not here.
struct MetricReport {
    EstimateCI c_index;
    std::vector<EstimateCI> td_auc;  // index t-1 for year t
    std::map<std::string, double> p_values;
};

MetricReport evaluate_dataset(const RiskDataset& data, int bootstrap_B, std::uint64_t seed);

// Subgroup harness. Cells, in order: all; excl_180d (drops subjects whose
// event falls within 180 days of the exam); change / no_change;
// fatty / dense. A cell needs >= 5 cases and >= 5 controls at the metric's
// horizon or it is flagged insufficient and skipped.
struct SubgroupReport {
    std::vector<std::pair<std::string, MetricReport>> cells;
};

SubgroupReport subgroup_report(const RiskDataset& data, int bootstrap_B, std::uint64_t seed);

// One row per (subgroup, metric, horizon):
// subgroup,metric,horizon,point,lo,hi,n_cases,n_controls,n_pairs,insufficient,dropped
void write_report_csv(const SubgroupReport& report, const std::string& path);
// Aligned human-readable table of the same rows.
std::string format_report_table(const SubgroupReport& report);

// Minimum cases/controls for a reportable subgroup cell.
inline constexpr long kMinCellCases = 5;
inline constexpr long kMinCellControls = 5;

}  // namespace priorisk::metrics
