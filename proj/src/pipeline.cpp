#include "priorisk/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "priorisk/errors.hpp"

namespace priorisk::pipeline {

namespace {

metrics::RiskSubject subject_shell(const synthdata::Cohort& cohort, int row) {
    metrics::RiskSubject s;
    s.id = cohort.exams[row].exam_id;
    s.time_years = synthdata::years_from_days(cohort.outcome_day[row]);
    s.time_days = cohort.outcome_day[row];
    s.event = cohort.event[row] != 0;
    synthdata::GroupTags tags = synthdata::tag_sample(cohort, row);
    s.change = tags.change;
    s.level = tags.level;
    return s;
}

}  // namespace

metrics::RiskDataset score_cohort(const synthdata::Cohort& cohort,
                                  const model::ModelParams& params) {
    if (cohort.feature_dim != params.dims().feature_dim)
        throw DataError("cohort feature width " + std::to_string(cohort.feature_dim) +
                        " does not match model feature_dim " +
                        std::to_string(params.dims().feature_dim));
    metrics::RiskDataset data;
    data.horizon = params.dims().horizon;
    for (int row : cohort.sample_rows()) {
        const auto& current = cohort.exams[row];
        const auto& prior = core::pair_prior_inference(current, cohort.priors_of(row));
        auto [pred, trace] = model::forward(current, prior, params);
        (void)trace;
        metrics::RiskSubject s = subject_shell(cohort, row);
        s.scores_by_horizon = pred.cumulative;
        s.risk = pred.cumulative.back();
        data.subjects.push_back(std::move(s));
    }
    if (data.subjects.empty()) throw DataError("no scoreable exams: every exam lacks a prior");
    data.validate();
    return data;
}

metrics::RiskDataset oracle_scores(const synthdata::Cohort& cohort, int horizon) {
    if (horizon < 1) throw ConfigError("oracle horizon must be >= 1");
    metrics::RiskDataset data;
    data.horizon = horizon;
    for (int row : cohort.sample_rows()) {
        double lambda = cohort.true_hazard[row];
        if (!std::isfinite(lambda))
            throw DataError("no ground-truth rate for exam " + cohort.exams[row].exam_id);
        metrics::RiskSubject s = subject_shell(cohort, row);
        s.scores_by_horizon.resize(horizon);
        for (int t = 1; t <= horizon; ++t)
            s.scores_by_horizon[t - 1] = 1.0 - std::exp(-lambda * t);
        s.risk = s.scores_by_horizon.back();
        data.subjects.push_back(std::move(s));
    }
    if (data.subjects.empty()) throw DataError("no scoreable exams: every exam lacks a prior");
    data.validate();
    return data;
}

// ---------------------------------------------------------------------------
// score table I/O

void write_scores_csv(const metrics::RiskDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "id,risk";
    for (int t = 1; t <= data.horizon; ++t) out << ",score_" << t;
    out << ",time_years,time_days,event,density_change,density_level\n";
    char buf[40];
    for (const auto& s : data.subjects) {
        out << s.id;
        std::snprintf(buf, sizeof(buf), ",%.17g", s.risk);
        out << buf;
        for (double v : s.scores_by_horizon) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << "," << s.time_years << "," << s.time_days << "," << (s.event ? 1 : 0) << ","
            << (s.change == core::DensityChange::change ? "change" : "no_change") << ","
            << (s.level == core::DensityLevel::fatty ? "fatty" : "dense") << "\n";
    }
    if (!out) throw DataError("failed writing " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& where) {
    char* endp = nullptr;
    double v = std::strtod(s.c_str(), &endp);
    if (endp == s.c_str() || *endp != '\0') throw DataError(where + ": bad number '" + s + "'");
    return v;
}

long parse_long(const std::string& s, const std::string& where) {
    try {
        return std::stol(s);
    } catch (const std::exception&) {
        throw DataError(where + ": bad integer '" + s + "'");
    }
}

}  // namespace

metrics::RiskDataset load_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty score file");
    auto header = split_line(line);
    if (header.size() < 8 || header[0] != "id" || header[1] != "risk")
        throw DataError(path + ": unrecognized score file header");
    int horizon = 0;
    while (2 + horizon < static_cast<int>(header.size()) &&
           header[2 + horizon] == "score_" + std::to_string(horizon + 1))
        ++horizon;
    if (horizon == 0) throw DataError(path + ": no score_<t> columns");
    std::vector<std::string> tail = {"time_years", "time_days", "event", "density_change",
                                     "density_level"};
    if (header.size() != 2 + static_cast<std::size_t>(horizon) + tail.size())
        throw DataError(path + ": unexpected column count");
    for (std::size_t k = 0; k < tail.size(); ++k)
        if (header[2 + horizon + k] != tail[k])
            throw DataError(path + ": missing column '" + tail[k] + "'");

    metrics::RiskDataset data;
    data.horizon = horizon;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_line(line);
        std::string where = path + ":" + std::to_string(line_no);
        if (f.size() != header.size()) throw DataError(where + ": wrong field count");
        metrics::RiskSubject s;
        s.id = f[0];
        s.risk = parse_double(f[1], where);
        s.scores_by_horizon.resize(horizon);
        for (int t = 0; t < horizon; ++t)
            s.scores_by_horizon[t] = parse_double(f[2 + t], where);
        std::size_t k = 2 + static_cast<std::size_t>(horizon);
        s.time_years = static_cast<int>(parse_long(f[k], where));
        s.time_days = parse_long(f[k + 1], where);
        if (f[k + 2] != "0" && f[k + 2] != "1") throw DataError(where + ": event must be 0 or 1");
        s.event = f[k + 2] == "1";
        if (f[k + 3] == "change") s.change = core::DensityChange::change;
        else if (f[k + 3] == "no_change") s.change = core::DensityChange::no_change;
        else throw DataError(where + ": bad density_change '" + f[k + 3] + "'");
        if (f[k + 4] == "fatty") s.level = core::DensityLevel::fatty;
        else if (f[k + 4] == "dense") s.level = core::DensityLevel::dense;
        else throw DataError(where + ": bad density_level '" + f[k + 4] + "'");
        data.subjects.push_back(std::move(s));
    }
    if (data.subjects.empty()) throw DataError(path + ": empty score file");
    data.validate();
    return data;
}

// ---------------------------------------------------------------------------
// paired comparison

void check_aligned(const metrics::RiskDataset& a, const metrics::RiskDataset& b) {
    if (a.horizon != b.horizon)
        throw DataError("score sets disagree on horizon: " + std::to_string(a.horizon) +
                        " vs " + std::to_string(b.horizon));
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a.subjects[i].id != b.subjects[i].id)
            throw DataError("score sets disagree at subject " + std::to_string(i) + ": '" +
                            a.subjects[i].id + "' vs '" + b.subjects[i].id + "'");
    if (a.size() != b.size())
        throw DataError("score sets have different sizes: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
}

ComparisonReport compare_scored(const metrics::RiskDataset& a, const metrics::RiskDataset& b) {
    check_aligned(a, b);
    ComparisonReport report;

    std::vector<double> risks_a, risks_b;
    for (const auto& s : a.subjects) risks_a.push_back(s.risk);
    for (const auto& s : b.subjects) risks_b.push_back(s.risk);
    report.c_index = metrics::compare_c(a, risks_a, risks_b);

    for (int t = 1; t <= a.horizon; ++t) {
        // subjects informative at t: events by t (cases) or still event-free
        // past t (controls); censored by t drop out
        std::vector<double> sa, sb;
        std::vector<char> labels;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto& s = a.subjects[i];
            bool is_case = s.event && s.time_years <= t;
            bool is_ctrl = s.time_years > t;
            if (!is_case && !is_ctrl) continue;
            sa.push_back(s.scores_by_horizon[t - 1]);
            sb.push_back(b.subjects[i].scores_by_horizon[t - 1]);
            labels.push_back(is_case ? 1 : 0);
        }
        AucComparison cmp;
        bool has_case = false, has_ctrl = false;
        for (char l : labels) (l ? has_case : has_ctrl) = true;
        if (has_case && has_ctrl) {
            cmp.defined = true;
            cmp.test = metrics::delong_test(sa, sb, labels);
        }
        report.auc_by_horizon.push_back(cmp);
    }
    return report;
}

void write_comparison_csv(const ComparisonReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "metric,horizon,value_a,value_b,diff,z,p,defined\n";
    char buf[200];
    const auto& c = report.c_index;
    std::snprintf(buf, sizeof(buf), "c_index,%d,%.17g,%.17g,%.17g,%.17g,%.17g,1\n",
                  static_cast<int>(report.auc_by_horizon.size()), c.c_a, c.c_b, c.diff, c.z,
                  c.p);
    out << buf;
    for (std::size_t t = 0; t < report.auc_by_horizon.size(); ++t) {
        const auto& cmp = report.auc_by_horizon[t];
        if (cmp.defined) {
            std::snprintf(buf, sizeof(buf), "td_auc,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,1\n",
                          t + 1, cmp.test.auc_a, cmp.test.auc_b,
                          cmp.test.auc_a - cmp.test.auc_b, cmp.test.z, cmp.test.p);
        } else {
            std::snprintf(buf, sizeof(buf), "td_auc,%zu,nan,nan,nan,nan,nan,0\n", t + 1);
        }
        out << buf;
    }
    if (!out) throw DataError("failed writing " + path);
}

std::string format_comparison_table(const ComparisonReport& report, const std::string& name_a,
                                    const std::string& name_b) {
    std::ostringstream out;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-8s %7s %12s %12s %9s %8s %10s\n", "metric", "horizon",
                  name_a.c_str(), name_b.c_str(), "diff", "z", "p");
    out << buf;
    const auto& c = report.c_index;
    std::snprintf(buf, sizeof(buf), "%-8s %7d %12.4f %12.4f %9.4f %8.3f %10.4g\n", "c_index",
                  static_cast<int>(report.auc_by_horizon.size()), c.c_a, c.c_b, c.diff, c.z,
                  c.p);
    out << buf;
    for (std::size_t t = 0; t < report.auc_by_horizon.size(); ++t) {
        const auto& cmp = report.auc_by_horizon[t];
        if (cmp.defined) {
            std::snprintf(buf, sizeof(buf), "%-8s %7zu %12.4f %12.4f %9.4f %8.3f %10.4g\n",
                          "td_auc", t + 1, cmp.test.auc_a, cmp.test.auc_b,
                          cmp.test.auc_a - cmp.test.auc_b, cmp.test.z, cmp.test.p);
        } else {
            std::snprintf(buf, sizeof(buf), "%-8s %7zu %12s %12s %9s %8s %10s\n", "td_auc",
                          t + 1, "--", "--", "--", "--", "insufficient");
        }
        out << buf;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// single-report output

void write_metric_report_csv(const metrics::MetricReport& report, const std::string& path) {
    // reuse the subgroup row format with a single "all" cell
    metrics::SubgroupReport wrap;
    wrap.cells.emplace_back("all", report);
    metrics::write_report_csv(wrap, path);
}

std::string format_metric_report_table(const metrics::MetricReport& report,
                                       const std::string& name) {
    std::ostringstream out;
    out << "dataset: " << name << "\n";
    metrics::SubgroupReport wrap;
    wrap.cells.emplace_back("all", report);
    out << metrics::format_report_table(wrap);
    return out.str();
}

}  // namespace priorisk::pipeline
