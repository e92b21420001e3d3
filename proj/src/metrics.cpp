#include "priorisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <omp.h>

#include "priorisk/errors.hpp"
#include "priorisk/rng.hpp"

namespace priorisk::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double conc_value(double a, double b) {
    if (a > b) return 1.0;
    if (a == b) return 0.5;
    return 0.0;
}

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

// ---------------------------------------------------------------------------
// StepFunction / Kaplan-Meier

StepFunction::StepFunction(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
    if (times_.size() != values_.size())
        throw ConfigError("step function: times/values length mismatch");
    for (std::size_t k = 1; k < times_.size(); ++k)
        if (!(times_[k - 1] < times_[k]))
            throw ConfigError("step function: jump times must be strictly ascending");
}

double StepFunction::at(double t) const {
    // value on [times_[k], times_[k+1]) — pick the last jump at or before t
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepFunction::left(double t) const {
    // exclude a jump at exactly t
    auto it = std::lower_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

StepFunction km_censoring_survival(std::span<const double> times, std::span<const char> events) {
    if (times.size() != events.size())
        throw ConfigError("km_censoring_survival: times/events length mismatch");
    const std::size_t n = times.size();

    std::map<double, long> censored_at;  // drop counts, ascending by time
    for (std::size_t i = 0; i < n; ++i)
        if (!events[i]) ++censored_at[times[i]];

    std::vector<double> sorted(times.begin(), times.end());
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> jump_times, jump_values;
    double survival = 1.0;
    for (auto [c, d] : censored_at) {
        auto at_risk = static_cast<long>(
            sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), c));
        survival *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
        jump_times.push_back(c);
        jump_values.push_back(survival);
    }
    return StepFunction(std::move(jump_times), std::move(jump_values));
}

// ---------------------------------------------------------------------------
// RiskDataset

void RiskDataset::validate() const {
    if (horizon < 1) throw ConfigError("risk dataset horizon must be >= 1");
    for (const auto& s : subjects) {
        if (!std::isfinite(s.risk)) throw DataError("non-finite risk for subject " + s.id);
        if (static_cast<int>(s.scores_by_horizon.size()) != horizon)
            throw DataError("subject " + s.id + ": expected " + std::to_string(horizon) +
                            " horizon scores, got " + std::to_string(s.scores_by_horizon.size()));
        for (double v : s.scores_by_horizon)
            if (!std::isfinite(v)) throw DataError("non-finite score for subject " + s.id);
        if (s.time_years < 1) throw DataError("subject " + s.id + ": time_years < 1");
        if (s.time_days < 0) throw DataError("subject " + s.id + ": negative time_days");
    }
}

// ---------------------------------------------------------------------------
// Censoring-weighted concordance

namespace {

// Per-subject pair weight: e_i * G(T_i-)^-2 when T_i < tau, else 0.
std::vector<double> uno_weights(const RiskDataset& data, int tau, std::vector<double>& times) {
    const std::size_t n = data.size();
    times.resize(n);
    std::vector<char> events(n);
    for (std::size_t i = 0; i < n; ++i) {
        times[i] = static_cast<double>(data.subjects[i].time_years);
        events[i] = data.subjects[i].event ? 1 : 0;
    }
    StepFunction g = km_censoring_survival(times, events);
    std::vector<double> weight(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!data.subjects[i].event || !(times[i] < static_cast<double>(tau))) continue;
        double gi = g.left(times[i]);
        weight[i] = 1.0 / (gi * gi);
        if (!std::isfinite(weight[i]))
            throw NumericError("censoring weight diverged at time " + std::to_string(times[i]));
    }
    return weight;
}

int resolve_tau(const RiskDataset& data, int tau) {
    if (tau < 0) return data.horizon;
    if (tau < 1) throw ConfigError("tau must be >= 1");
    return tau;
}

double subject_risk(const RiskDataset& data, const double* risks, std::size_t i) {
    return risks ? risks[i] : data.subjects[i].risk;
}

ConcordanceResult uno_serial_impl(const RiskDataset& data, const double* risks, int tau) {
    const std::size_t n = data.size();
    if (n == 0) return {kNaN, true, 0};
    std::vector<double> times;
    std::vector<double> weight = uno_weights(data, resolve_tau(data, tau), times);

    double num = 0.0, den = 0.0;
    long cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weight[i] == 0.0) continue;
        double ri = subject_risk(data, risks, i);
        double num_i = 0.0, den_i = 0.0;
        long cnt_i = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(times[i] < times[j])) continue;
            num_i += weight[i] * conc_value(ri, subject_risk(data, risks, j));
            den_i += weight[i];
            ++cnt_i;
        }
        num += num_i;
        den += den_i;
        cnt += cnt_i;
    }
    if (cnt == 0) return {kNaN, true, 0};
    return {num / den, false, cnt};
}

ConcordanceResult uno_parallel_impl(const RiskDataset& data, const double* risks, int tau) {
    const std::size_t n = data.size();
    if (n == 0) return {kNaN, true, 0};
    std::vector<double> times;
    std::vector<double> weight = uno_weights(data, resolve_tau(data, tau), times);

    // per-i partial sums; reduced afterwards in index order so any thread
    // count reproduces the serial result bitwise
    std::vector<double> num_s(n, 0.0), den_s(n, 0.0);
    std::vector<long> cnt_s(n, 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(n); ++ip) {
        auto i = static_cast<std::size_t>(ip);
        if (weight[i] == 0.0) continue;
        double ri = subject_risk(data, risks, i);
        double num_i = 0.0, den_i = 0.0;
        long cnt_i = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(times[i] < times[j])) continue;
            num_i += weight[i] * conc_value(ri, subject_risk(data, risks, j));
            den_i += weight[i];
            ++cnt_i;
        }
        num_s[i] = num_i;
        den_s[i] = den_i;
        cnt_s[i] = cnt_i;
    }
    double num = 0.0, den = 0.0;
    long cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += num_s[i];
        den += den_s[i];
        cnt += cnt_s[i];
    }
    if (cnt == 0) return {kNaN, true, 0};
    return {num / den, false, cnt};
}

}  // namespace

ConcordanceResult uno_c_index(const RiskDataset& data, int tau) {
    return uno_parallel_impl(data, nullptr, tau);
}

ConcordanceResult uno_c_index_serial(const RiskDataset& data, int tau) {
    return uno_serial_impl(data, nullptr, tau);
}

ConcordanceResult uno_c_index_scores(const RiskDataset& data, std::span<const double> risks,
                                     int tau) {
    if (risks.size() != data.size())
        throw DataError("risk vector length does not match the dataset");
    return uno_parallel_impl(data, risks.data(), tau);
}

// ---------------------------------------------------------------------------
// Time-dependent AUC

namespace {

AucResult td_auc_impl(const RiskDataset& data, const double* scores, int t) {
    if (t < 1 || t > data.horizon)
        throw ConfigError("td_auc horizon " + std::to_string(t) + " outside [1, " +
                          std::to_string(data.horizon) + "]");
    std::vector<double> case_scores, ctrl_scores;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data.subjects[i];
        double v = scores ? scores[i] : s.scores_by_horizon[static_cast<std::size_t>(t) - 1];
        if (s.event && s.time_years <= t) case_scores.push_back(v);
        else if (s.time_years > t) ctrl_scores.push_back(v);
        // censored by t: excluded
    }
    AucResult result;
    result.n_cases = static_cast<long>(case_scores.size());
    result.n_controls = static_cast<long>(ctrl_scores.size());
    if (case_scores.empty() || ctrl_scores.empty()) {
        result.auc = kNaN;
        result.insufficient = true;
        return result;
    }
    double sum = 0.0;
    for (double cs : case_scores)
        for (double ks : ctrl_scores) sum += conc_value(cs, ks);
    result.auc = sum / (static_cast<double>(case_scores.size()) *
                        static_cast<double>(ctrl_scores.size()));
    return result;
}

}  // namespace

AucResult td_auc(const RiskDataset& data, int t) { return td_auc_impl(data, nullptr, t); }

AucResult td_auc_scores(const RiskDataset& data, std::span<const double> scores, int t) {
    if (scores.size() != data.size())
        throw DataError("score vector length does not match the dataset");
    return td_auc_impl(data, scores.data(), t);
}

// ---------------------------------------------------------------------------
// DeLong paired AUC test

DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const char> labels) {
    const std::size_t n_all = labels.size();
    if (scores_a.size() != n_all || scores_b.size() != n_all)
        throw DataError("delong_test: score/label length mismatch");
    std::vector<std::size_t> cases, ctrls;
    for (std::size_t i = 0; i < n_all; ++i) (labels[i] ? cases : ctrls).push_back(i);
    const std::size_t m = cases.size(), n = ctrls.size();
    if (m == 0 || n == 0)
        throw DataError("delong_test: degenerate labels, need at least one case and one control");

    // structural components: v10 per case (averaged over controls), v01
    // per control (averaged over cases), for each model
    std::vector<double> v10a(m, 0.0), v10b(m, 0.0), v01a(n, 0.0), v01b(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double ca = conc_value(scores_a[cases[i]], scores_a[ctrls[j]]);
            double cb = conc_value(scores_b[cases[i]], scores_b[ctrls[j]]);
            v10a[i] += ca;
            v10b[i] += cb;
            v01a[j] += ca;
            v01b[j] += cb;
        }
    }
    for (double& v : v10a) v /= static_cast<double>(n);
    for (double& v : v10b) v /= static_cast<double>(n);
    for (double& v : v01a) v /= static_cast<double>(m);
    for (double& v : v01b) v /= static_cast<double>(m);

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    double auc_a = mean(v10a), auc_b = mean(v10b);

    auto cov = [](const std::vector<double>& x, const std::vector<double>& y, double mx,
                  double my) {
        if (x.size() < 2) return 0.0;
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - mx) * (y[k] - my);
        return s / static_cast<double>(x.size() - 1);
    };
    double s10aa = cov(v10a, v10a, auc_a, auc_a), s10bb = cov(v10b, v10b, auc_b, auc_b);
    double s10ab = cov(v10a, v10b, auc_a, auc_b);
    double s01aa = cov(v01a, v01a, auc_a, auc_a), s01bb = cov(v01b, v01b, auc_b, auc_b);
    double s01ab = cov(v01a, v01b, auc_a, auc_b);

    double var_diff = (s10aa + s10bb - 2.0 * s10ab) / static_cast<double>(m) +
                      (s01aa + s01bb - 2.0 * s01ab) / static_cast<double>(n);

    DeLongResult result;
    result.auc_a = auc_a;
    result.auc_b = auc_b;
    if (var_diff > 0.0 && std::isfinite(var_diff)) {
        result.z = (auc_a - auc_b) / std::sqrt(var_diff);
        result.p = two_sided_p(result.z);
    } else {
        result.z = 0.0;
        result.p = 1.0;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Paired concordance comparison

CompareCResult compare_c(const RiskDataset& data, std::span<const double> risks_a,
                         std::span<const double> risks_b, int tau) {
    const std::size_t n = data.size();
    if (risks_a.size() != n || risks_b.size() != n)
        throw DataError("compare_c: risk vector length does not match the dataset");
    if (n < 2) throw DataError("compare_c: no comparable pairs");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(risks_a[i]) || !std::isfinite(risks_b[i]))
            throw DataError("compare_c: non-finite risk");

    std::vector<double> times;
    std::vector<double> weight = uno_weights(data, resolve_tau(data, tau), times);

    // first-order projection of each estimator: per-subject averages of the
    // symmetrized pair kernels for numerators (per model) and denominator
    std::vector<double> g_na(n, 0.0), g_nb(n, 0.0), g_d(n, 0.0);
    double sum_na = 0.0, sum_nb = 0.0, sum_d = 0.0;
    long cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weight[i] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(times[i] < times[j])) continue;
            double hd = weight[i];
            double hna = weight[i] * conc_value(risks_a[i], risks_a[j]);
            double hnb = weight[i] * conc_value(risks_b[i], risks_b[j]);
            g_d[i] += hd / 2.0;
            g_d[j] += hd / 2.0;
            g_na[i] += hna / 2.0;
            g_na[j] += hna / 2.0;
            g_nb[i] += hnb / 2.0;
            g_nb[j] += hnb / 2.0;
            sum_d += hd;
            sum_na += hna;
            sum_nb += hnb;
            ++cnt;
        }
    }
    if (cnt == 0) throw DataError("compare_c: no comparable pairs");

    const double nd = static_cast<double>(n);
    double u_d = sum_d / (nd * (nd - 1.0));
    double c_a = sum_na / sum_d;
    double c_b = sum_nb / sum_d;

    // influence values; they sum to zero by construction
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double gna = g_na[k] / (nd - 1.0);
        double gnb = g_nb[k] / (nd - 1.0);
        double gd = g_d[k] / (nd - 1.0);
        double phi = 2.0 * ((gna - gnb) - (c_a - c_b) * gd) / u_d;
        ss += phi * phi;
    }
    double var_diff = ss / (nd * (nd - 1.0));

    CompareCResult result;
    result.c_a = c_a;
    result.c_b = c_b;
    result.diff = c_a - c_b;
    result.var_diff = var_diff;
    if (var_diff > 0.0 && std::isfinite(var_diff)) {
        result.z = result.diff / std::sqrt(var_diff);
        result.p = two_sided_p(result.z);
    } else {
        result.z = 0.0;
        result.p = 1.0;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Bootstrap

namespace {

constexpr std::uint64_t kBootstrapStreamBase = 1ULL << 32;

double quantile_type7(const std::vector<double>& sorted, double q) {
    const std::size_t m = sorted.size();
    if (m == 1) return sorted[0];
    double h = q * static_cast<double>(m - 1);
    auto k = static_cast<std::size_t>(h);
    if (k + 1 >= m) return sorted[m - 1];
    double frac = h - static_cast<double>(k);
    return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

BootstrapCI percentile_interval(const std::vector<double>& values) {
    std::vector<double> finite;
    finite.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) finite.push_back(v);
    BootstrapCI ci;
    ci.used = static_cast<int>(finite.size());
    ci.dropped = static_cast<int>(values.size() - finite.size());
    if (finite.empty()) throw DataError("bootstrap: every replicate was insufficient");
    std::sort(finite.begin(), finite.end());
    ci.lo = quantile_type7(finite, 0.025);
    ci.hi = quantile_type7(finite, 0.975);
    return ci;
}

void check_bootstrap_args(const RiskDataset& data, int B) {
    if (B < 1) throw ConfigError("bootstrap needs B >= 1");
    if (data.subjects.empty()) throw DataError("bootstrap needs a nonempty dataset");
}

void fill_replicate(const RiskDataset& data, RiskDataset& scratch, std::uint64_t seed, int rep) {
    Rng rng(mix_seed(seed, kBootstrapStreamBase + static_cast<std::uint64_t>(rep)));
    const std::size_t n = data.subjects.size();
    scratch.subjects.clear();
    for (std::size_t k = 0; k < n; ++k)
        scratch.subjects.push_back(data.subjects[rng.uniform_index(n)]);
}

}  // namespace

BootstrapCI bootstrap_ci_serial(const RiskDataset& data, const Statistic& stat, int B,
                                std::uint64_t seed) {
    check_bootstrap_args(data, B);
    std::vector<double> values(static_cast<std::size_t>(B));
    RiskDataset scratch;
    scratch.horizon = data.horizon;
    scratch.subjects.reserve(data.subjects.size());
    for (int rep = 0; rep < B; ++rep) {
        fill_replicate(data, scratch, seed, rep);
        values[static_cast<std::size_t>(rep)] = stat(scratch);
    }
    return percentile_interval(values);
}

BootstrapCI bootstrap_ci(const RiskDataset& data, const Statistic& stat, int B,
                         std::uint64_t seed) {
    check_bootstrap_args(data, B);
    std::vector<double> values(static_cast<std::size_t>(B));
    bool failed = false;
    std::string failure;
#pragma omp parallel
    {
        RiskDataset scratch;
        scratch.horizon = data.horizon;
        scratch.subjects.reserve(data.subjects.size());
#pragma omp for schedule(dynamic)
        for (int rep = 0; rep < B; ++rep) {
            try {
                fill_replicate(data, scratch, seed, rep);
                values[static_cast<std::size_t>(rep)] = stat(scratch);
            } catch (const std::exception& e) {
                // exceptions cannot cross the parallel region; surface after
#pragma omp critical
                {
                    failed = true;
                    failure = e.what();
                }
                values[static_cast<std::size_t>(rep)] = kNaN;
            }
        }
    }
    if (failed) throw NumericError("bootstrap replicate failed: " + failure);
    return percentile_interval(values);
}

// ---------------------------------------------------------------------------
// Report assembly

namespace {

// case/control counts at horizon t under the cumulative/dynamic rule
std::pair<long, long> cell_counts(const RiskDataset& data, int t) {
    long cases = 0, ctrls = 0;
    for (const auto& s : data.subjects) {
        if (s.event && s.time_years <= t) ++cases;
        else if (s.time_years > t) ++ctrls;
    }
    return {cases, ctrls};
}

EstimateCI insufficient_cell(long cases, long ctrls, long pairs) {
    EstimateCI cell;
    cell.point = cell.lo = cell.hi = kNaN;
    cell.n_cases = cases;
    cell.n_controls = ctrls;
    cell.n_pairs = pairs;
    cell.insufficient = true;
    return cell;
}

EstimateCI concordance_cell(const RiskDataset& data, int bootstrap_B, std::uint64_t seed) {
    auto [cases, ctrls] = cell_counts(data, data.horizon);
    if (cases < kMinCellCases || ctrls < kMinCellControls)
        return insufficient_cell(cases, ctrls, 0);
    ConcordanceResult point = uno_c_index(data);
    if (point.insufficient) return insufficient_cell(cases, ctrls, 0);

    EstimateCI cell;
    cell.point = point.c;
    cell.n_cases = cases;
    cell.n_controls = ctrls;
    cell.n_pairs = point.n_pairs;
    try {
        BootstrapCI ci = bootstrap_ci(
            data,
            [](const RiskDataset& d) {
                ConcordanceResult r = uno_c_index(d);
                return r.insufficient ? kNaN : r.c;
            },
            bootstrap_B, seed);
        cell.lo = ci.lo;
        cell.hi = ci.hi;
        cell.dropped_replicates = ci.dropped;
    } catch (const DataError&) {
        return insufficient_cell(cases, ctrls, point.n_pairs);
    }
    return cell;
}

EstimateCI auc_cell(const RiskDataset& data, int t, int bootstrap_B, std::uint64_t seed) {
    auto [cases, ctrls] = cell_counts(data, t);
    if (cases < kMinCellCases || ctrls < kMinCellControls)
        return insufficient_cell(cases, ctrls, 0);
    AucResult point = td_auc(data, t);
    if (point.insufficient) return insufficient_cell(cases, ctrls, 0);

    EstimateCI cell;
    cell.point = point.auc;
    cell.n_cases = cases;
    cell.n_controls = ctrls;
    try {
        BootstrapCI ci = bootstrap_ci(
            data,
            [t](const RiskDataset& d) {
                AucResult r = td_auc(d, t);
                return r.insufficient ? kNaN : r.auc;
            },
            bootstrap_B, seed);
        cell.lo = ci.lo;
        cell.hi = ci.hi;
        cell.dropped_replicates = ci.dropped;
    } catch (const DataError&) {
        return insufficient_cell(cases, ctrls, 0);
    }
    return cell;
}

}  // namespace

MetricReport evaluate_dataset(const RiskDataset& data, int bootstrap_B, std::uint64_t seed) {
    data.validate();
    MetricReport report;
    report.c_index = concordance_cell(data, bootstrap_B, mix_seed(seed, 0xc1));
    report.td_auc.reserve(static_cast<std::size_t>(data.horizon));
    for (int t = 1; t <= data.horizon; ++t)
        report.td_auc.push_back(
            auc_cell(data, t, bootstrap_B, mix_seed(seed, 0xa0 + static_cast<std::uint64_t>(t))));
    return report;
}

SubgroupReport subgroup_report(const RiskDataset& data, int bootstrap_B, std::uint64_t seed) {
    data.validate();

    auto subset = [&](auto&& keep) {
        RiskDataset out;
        out.horizon = data.horizon;
        for (const auto& s : data.subjects)
            if (keep(s)) out.subjects.push_back(s);
        return out;
    };

    std::vector<std::pair<std::string, RiskDataset>> cells;
    cells.emplace_back("all", data);
    cells.emplace_back("excl_180d", subset([](const RiskSubject& s) {
                           return !(s.event && s.time_days < 180);
                       }));
    cells.emplace_back("change", subset([](const RiskSubject& s) {
                           return s.change == core::DensityChange::change;
                       }));
    cells.emplace_back("no_change", subset([](const RiskSubject& s) {
                           return s.change == core::DensityChange::no_change;
                       }));
    cells.emplace_back("fatty", subset([](const RiskSubject& s) {
                           return s.level == core::DensityLevel::fatty;
                       }));
    cells.emplace_back("dense", subset([](const RiskSubject& s) {
                           return s.level == core::DensityLevel::dense;
                       }));

    SubgroupReport report;
    for (std::size_t k = 0; k < cells.size(); ++k)
        report.cells.emplace_back(cells[k].first,
                                  evaluate_dataset(cells[k].second, bootstrap_B,
                                                   mix_seed(seed, 0x500 + k)));
    return report;
}

// ---------------------------------------------------------------------------
// Report output

namespace {

struct ReportRow {
    std::string subgroup;
    std::string metric;
    int horizon;
    const EstimateCI* cell;
};

std::vector<ReportRow> flatten(const SubgroupReport& report) {
    std::vector<ReportRow> rows;
    for (const auto& [name, mr] : report.cells) {
        rows.push_back({name, "c_index", static_cast<int>(mr.td_auc.size()), &mr.c_index});
        for (std::size_t t = 0; t < mr.td_auc.size(); ++t)
            rows.push_back({name, "td_auc", static_cast<int>(t) + 1, &mr.td_auc[t]});
    }
    return rows;
}

}  // namespace

void write_report_csv(const SubgroupReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "subgroup,metric,horizon,point,lo,hi,n_cases,n_controls,n_pairs,insufficient,"
           "dropped_replicates\n";
    char buf[160];
    for (const ReportRow& r : flatten(report)) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g,%.17g,%.17g,%ld,%ld,%ld,%d,%d\n",
                      r.subgroup.c_str(), r.metric.c_str(), r.horizon, r.cell->point,
                      r.cell->lo, r.cell->hi, r.cell->n_cases, r.cell->n_controls,
                      r.cell->n_pairs, r.cell->insufficient ? 1 : 0,
                      r.cell->dropped_replicates);
        out << buf;
    }
    if (!out) throw DataError("failed writing " + path);
}

std::string format_report_table(const SubgroupReport& report) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %-8s %7s %8s %17s %8s %9s\n", "subgroup", "metric",
                  "horizon", "point", "95% CI", "cases", "controls");
    out << buf;
    for (const ReportRow& r : flatten(report)) {
        if (r.cell->insufficient) {
            std::snprintf(buf, sizeof(buf), "%-10s %-8s %7d %8s %17s %8ld %9ld\n",
                          r.subgroup.c_str(), r.metric.c_str(), r.horizon, "--",
                          "insufficient", r.cell->n_cases, r.cell->n_controls);
        } else {
            char ci[32];
            std::snprintf(ci, sizeof(ci), "[%.3f, %.3f]", r.cell->lo, r.cell->hi);
            std::snprintf(buf, sizeof(buf), "%-10s %-8s %7d %8.3f %17s %8ld %9ld\n",
                          r.subgroup.c_str(), r.metric.c_str(), r.horizon, r.cell->point, ci,
                          r.cell->n_cases, r.cell->n_controls);
        }
        out << buf;
    }
    return out.str();
}

}  // namespace priorisk::metrics
