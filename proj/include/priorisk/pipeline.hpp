#pragma once

#include <string>
#include <vector>

#include "priorisk/metrics.hpp"
#include "priorisk/model.hpp"
#include "priorisk/synthdata.hpp"

namespace priorisk::pipeline {

// Scores every exam that has a prior, pairing it with its closest prior.
// risk is the predicted cumulative risk at the model's max horizon;
// scores_by_horizon holds the full trajectory.
metrics::RiskDataset score_cohort(const synthdata::Cohort& cohort,
                                  const model::ModelParams& params);

// Scores from the generator's ground-truth rates: P(event by year t) =
// 1 - exp(-lambda * t). Requires true_hazard to be present (not NaN).
metrics::RiskDataset oracle_scores(const synthdata::Cohort& cohort, int horizon);

// Per-subject score table shared by eval, compare, and subgroup:
// id,risk,score_1..score_T,time_years,time_days,event,density_change,density_level
void write_scores_csv(const metrics::RiskDataset& data, const std::string& path);
metrics::RiskDataset load_scores_csv(const std::string& path);

// Both score sets must cover the same subjects in the same order; throws
// DataError naming the first mismatched id.
void check_aligned(const metrics::RiskDataset& a, const metrics::RiskDataset& b);

struct AucComparison {
    bool defined = false;  // false when a horizon lacks cases or controls
    metrics::DeLongResult test;
};

// Paired comparison of two scored datasets: concordance difference plus a
// per-horizon AUC test on the subjects still under observation at each
// horizon.
struct ComparisonReport {
    metrics::CompareCResult c_index;
    std::vector<AucComparison> auc_by_horizon;  // index t-1 for year t
};

ComparisonReport compare_scored(const metrics::RiskDataset& a, const metrics::RiskDataset& b);

// metric,horizon,value_a,value_b,diff,z,p,defined
void write_comparison_csv(const ComparisonReport& report, const std::string& path);
std::string format_comparison_table(const ComparisonReport& report, const std::string& name_a,
                                    const std::string& name_b);

// metric,horizon,point,lo,hi,n_cases,n_controls,n_pairs,insufficient,dropped_replicates
void write_metric_report_csv(const metrics::MetricReport& report, const std::string& path);
std::string format_metric_report_table(const metrics::MetricReport& report,
                                       const std::string& name);

}  // namespace priorisk::pipeline
