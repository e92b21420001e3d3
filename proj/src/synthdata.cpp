#include "priorisk/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "priorisk/errors.hpp"
#include "priorisk/rng.hpp"

namespace priorisk::synthdata {

void CohortConfig::validate() const {
    if (n_patients < 1) throw ConfigError("n_patients must be >= 1");
    if (min_exams < 2) throw ConfigError("min_exams must be >= 2 (every sample needs a prior)");
    if (max_exams < min_exams) throw ConfigError("max_exams must be >= min_exams");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (texture_dim < 1) throw ConfigError("texture_dim must be >= 1");
    if (lambda0 <= 0.0) throw ConfigError("lambda0 must be positive");
    if (min_gap_days < 1 || max_gap_days < min_gap_days)
        throw ConfigError("invalid inter-exam gap range");
    if (texture_jump_prob < 0.0 || texture_jump_prob > 1.0)
        throw ConfigError("texture_jump_prob must lie in [0, 1]");
    if (texture_radius <= 0.0) throw ConfigError("texture_radius must be positive");

    auto check_probs = [](std::span<const double> p, const std::string& what) {
        double sum = 0.0;
        for (double v : p) {
            if (v < 0.0) throw ConfigError(what + ": negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(what + ": probabilities must sum to 1");
    };
    check_probs(init_density, "init_density");
    for (int r = 0; r < 4; ++r)
        check_probs(density_transition[r], "density_transition row " + std::to_string(r));

    long last_exam_day = first_exam_day_max + (max_exams - 1) * max_gap_days;
    if (admin_horizon_day <= last_exam_day)
        throw ConfigError("admin_horizon_day must exceed the last possible exam day (" +
                          std::to_string(last_exam_day) + ")");
}

int years_from_days(long days) {
    return static_cast<int>((days + 364) / 365);
}

std::span<const core::ExamRecord> Cohort::priors_of(int i) const {
    int start = patient_start[i];
    return std::span<const core::ExamRecord>(exams.data() + start, i - start);
}

std::vector<int> Cohort::sample_rows() const {
    std::vector<int> rows;
    for (int i = 0; i < static_cast<int>(exams.size()); ++i)
        if (i > patient_start[i]) rows.push_back(i);
    return rows;
}

core::SurvivalOutcome Cohort::outcome_of(int i) const {
    return {event[i] != 0, years_from_days(outcome_day[i])};
}

void Cohort::rebuild_patient_index() {
    patient_start.assign(exams.size(), 0);
    for (std::size_t i = 1; i < exams.size(); ++i)
        patient_start[i] = (exams[i].patient_id == exams[i - 1].patient_id)
                               ? patient_start[i - 1]
                               : static_cast<int>(i);
}

namespace {

int draw_category(Rng& rng, std::span<const double> probs) {
    double u = rng.uniform01();
    double acc = 0.0;
    for (int c = 0; c < static_cast<int>(probs.size()); ++c) {
        acc += probs[c];
        if (u < acc) return c;
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Cohort generate_cohort(const CohortConfig& cfg) {
    cfg.validate();
    Cohort cohort;
    cohort.feature_dim = cfg.feature_dim;

    // population-level fixtures: density embeddings and the texture mixing
    // map are shared by every cohort drawn with the same population_seed
    Rng fixture_rng(mix_seed(cfg.population_seed, 0xf1c5));
    std::array<std::vector<double>, 4> embed;
    for (auto& e : embed) {
        e.resize(cfg.feature_dim);
        for (double& v : e) v = cfg.density_embed_scale * fixture_rng.normal();
    }
    std::vector<double> mix(static_cast<std::size_t>(cfg.feature_dim) * cfg.texture_dim);
    double mix_scale = 1.0 / std::sqrt(static_cast<double>(cfg.texture_dim));
    for (double& v : mix) v = mix_scale * fixture_rng.normal();

    for (int p = 0; p < cfg.n_patients; ++p) {
        Rng rng(mix_seed(cfg.seed, 0x70000000ULL + static_cast<std::uint64_t>(p)));
        char pid[16];
        std::snprintf(pid, sizeof(pid), "P%05d", p);

        int n_exams = static_cast<int>(rng.uniform_int(cfg.min_exams, cfg.max_exams));
        long day = rng.uniform_int(0, cfg.first_exam_day_max);

        auto renormalize = [&](std::vector<double>& t) {
            double ss = 0.0;
            for (double v : t) ss += v * v;
            double scale = cfg.texture_radius / std::sqrt(ss);
            for (double& v : t) v *= scale;
        };
        std::vector<double> texture(cfg.texture_dim), prev_texture;
        for (double& v : texture) v = rng.normal();
        renormalize(texture);
        int density = draw_category(rng, cfg.init_density);
        int prev_density = -1;

        int block_start = static_cast<int>(cohort.exams.size());
        for (int k = 0; k < n_exams; ++k) {
            if (k > 0) {
                day += rng.uniform_int(cfg.min_gap_days, cfg.max_gap_days);
                prev_density = density;
                density = draw_category(rng, cfg.density_transition[density]);
                prev_texture = texture;
                double step_sd = rng.uniform01() < cfg.texture_jump_prob
                                     ? cfg.texture_jump_sd
                                     : cfg.texture_step_sd;
                for (double& v : texture) v += step_sd * cfg.texture_radius * rng.normal();
                renormalize(texture);
            }

            core::ExamRecord exam;
            exam.patient_id = pid;
            char eid[24];
            std::snprintf(eid, sizeof(eid), "%s_E%02d", pid, k + 1);
            exam.exam_id = eid;
            exam.acquisition_day = day;
            exam.density = static_cast<core::Density>(density);
            exam.features.resize(cfg.feature_dim);
            for (int i = 0; i < cfg.feature_dim; ++i) {
                double tex = 0.0;
                for (int l = 0; l < cfg.texture_dim; ++l)
                    tex += mix[static_cast<std::size_t>(i) * cfg.texture_dim + l] * texture[l];
                exam.features[i] = embed[density][i] + tex + cfg.feature_noise_sd * rng.normal();
            }

            double drift = 0.0;
            if (k > 0) {
                double ss = 0.0;
                for (int l = 0; l < cfg.texture_dim; ++l) {
                    double dlt = texture[l] - prev_texture[l];
                    ss += dlt * dlt;
                }
                drift = std::sqrt(ss);
            }
            bool changed = k > 0 && density != prev_density;
            double lambda = cfg.lambda0 * std::exp(cfg.beta_density[density] +
                                                   cfg.beta_change * (changed ? 1.0 : 0.0) +
                                                   cfg.beta_texture * drift);

            long censor_days = cfg.admin_horizon_day - day;
            double event_years = -std::log(1.0 - rng.uniform01()) / lambda;
            long event_days = std::max<long>(1, std::lround(event_years * 365.0));

            cohort.exams.push_back(std::move(exam));
            cohort.event.push_back(event_days <= censor_days ? 1 : 0);
            cohort.outcome_day.push_back(std::min(event_days, censor_days));
            cohort.true_hazard.push_back(lambda);
            cohort.patient_start.push_back(block_start);
        }
    }
    return cohort;
}

GroupTags tag_sample(const Cohort& cohort, int row) {
    auto priors = cohort.priors_of(row);
    const auto& paired = core::pair_prior_inference(cohort.exams[row], priors);
    GroupTags tags;
    tags.change = (paired.density != cohort.exams[row].density) ? core::DensityChange::change
                                                                : core::DensityChange::no_change;
    tags.level = core::density_level(cohort.exams[row].density);
    return tags;
}

std::vector<std::pair<int, GroupTags>> tag_groups(const Cohort& cohort) {
    std::vector<std::pair<int, GroupTags>> out;
    for (int row : cohort.sample_rows()) out.emplace_back(row, tag_sample(cohort, row));
    return out;
}

// ---------------------------------------------------------------------------
// CSV I/O

void write_csv(const Cohort& cohort, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "patient_id,exam_id,acquisition_day,density,event,outcome_day";
    for (int i = 0; i < cohort.feature_dim; ++i) out << ",feature_" << i;
    out << "\n";
    char buf[32];
    for (std::size_t r = 0; r < cohort.size(); ++r) {
        const auto& e = cohort.exams[r];
        out << e.patient_id << "," << e.exam_id << "," << e.acquisition_day << ","
            << core::density_letter(e.density) << "," << int(cohort.event[r]) << ","
            << cohort.outcome_day[r];
        for (double v : e.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
    if (!out) throw DataError("failed writing " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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

}  // namespace

Cohort load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty dataset file");

    auto header = split_csv_line(line);
    const std::vector<std::string> fixed = {"patient_id", "exam_id", "acquisition_day",
                                            "density",    "event",   "outcome_day"};
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        if (i >= header.size() || header[i] != fixed[i])
            throw DataError(path + ": missing or misplaced column '" + fixed[i] + "'");
    }
    int feature_dim = static_cast<int>(header.size() - fixed.size());
    if (feature_dim < 1) throw DataError(path + ": no feature columns");
    for (int i = 0; i < feature_dim; ++i) {
        std::string want = "feature_" + std::to_string(i);
        if (header[fixed.size() + i] != want)
            throw DataError(path + ": missing column '" + want + "'");
    }

    Cohort cohort;
    cohort.feature_dim = feature_dim;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(f.size()));
        core::ExamRecord exam;
        exam.patient_id = f[0];
        exam.exam_id = f[1];
        try {
            exam.acquisition_day = std::stol(f[2]);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad acquisition_day");
        }
        if (f[3].size() != 1) throw DataError(path + ":" + std::to_string(line_no) + ": bad density");
        exam.density = core::density_from_letter(f[3][0]);
        if (f[4] != "0" && f[4] != "1")
            throw DataError(path + ":" + std::to_string(line_no) + ": event must be 0 or 1");
        bool ev = f[4] == "1";
        long od = 0;
        try {
            od = std::stol(f[5]);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad outcome_day");
        }
        if (od < 1) throw DataError(path + ":" + std::to_string(line_no) + ": outcome_day < 1");

        exam.features.resize(feature_dim);
        for (int i = 0; i < feature_dim; ++i) {
            const std::string& s = f[fixed.size() + i];
            char* endp = nullptr;
            double v = std::strtod(s.c_str(), &endp);
            if (endp == s.c_str() || *endp != '\0')
                throw DataError(path + ":" + std::to_string(line_no) + ": bad feature value '" +
                                s + "'");
            if (!std::isfinite(v))
                throw DataError(path + ":" + std::to_string(line_no) + ": non-finite feature");
            exam.features[i] = v;
        }
        core::validate_exam(exam, feature_dim);
        if (!seen.insert({exam.patient_id, exam.exam_id}).second)
            throw DataError(path + ": duplicate exam (" + exam.patient_id + ", " + exam.exam_id +
                            ")");

        cohort.exams.push_back(std::move(exam));
        cohort.event.push_back(ev ? 1 : 0);
        cohort.outcome_day.push_back(od);
        cohort.true_hazard.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    if (cohort.exams.empty()) throw DataError(path + ": empty dataset file");

    // group by first appearance of each patient, time-ordered within patient
    std::vector<int> order(cohort.exams.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::map<std::string, int> first_seen;
    for (std::size_t i = 0; i < cohort.exams.size(); ++i)
        first_seen.emplace(cohort.exams[i].patient_id, static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& ea = cohort.exams[a];
        const auto& eb = cohort.exams[b];
        int fa = first_seen[ea.patient_id], fb = first_seen[eb.patient_id];
        if (fa != fb) return fa < fb;
        if (ea.acquisition_day != eb.acquisition_day)
            return ea.acquisition_day < eb.acquisition_day;
        return ea.exam_id < eb.exam_id;
    });

    Cohort sorted;
    sorted.feature_dim = cohort.feature_dim;
    for (int idx : order) {
        sorted.exams.push_back(std::move(cohort.exams[idx]));
        sorted.event.push_back(cohort.event[idx]);
        sorted.outcome_day.push_back(cohort.outcome_day[idx]);
        sorted.true_hazard.push_back(cohort.true_hazard[idx]);
    }
    sorted.rebuild_patient_index();
    return sorted;
}

void write_oracle_csv(const Cohort& cohort, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "exam_id,true_hazard\n";
    char buf[32];
    for (std::size_t r = 0; r < cohort.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", cohort.true_hazard[r]);
        out << cohort.exams[r].exam_id << "," << buf << "\n";
    }
}

void load_oracle_csv(Cohort& cohort, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open oracle file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "exam_id,true_hazard")
        throw DataError(path + ": bad oracle header");
    std::map<std::string, double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 2) throw DataError(path + ": malformed oracle row");
        values[f[0]] = std::strtod(f[1].c_str(), nullptr);
    }
    for (std::size_t r = 0; r < cohort.size(); ++r) {
        auto it = values.find(cohort.exams[r].exam_id);
        if (it == values.end())
            throw DataError(path + ": no true_hazard for exam " + cohort.exams[r].exam_id);
        cohort.true_hazard[r] = it->second;
    }
}

// ---------------------------------------------------------------------------
// config file

CohortConfig cohort_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cohort config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }

    CohortConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("n_patients", cfg.n_patients);
    get("min_exams", cfg.min_exams);
    get("max_exams", cfg.max_exams);
    get("feature_dim", cfg.feature_dim);
    get("texture_dim", cfg.texture_dim);
    get("init_density", cfg.init_density);
    get("density_transition", cfg.density_transition);
    get("beta_density", cfg.beta_density);
    get("beta_change", cfg.beta_change);
    get("beta_texture", cfg.beta_texture);
    get("lambda0", cfg.lambda0);
    get("admin_horizon_day", cfg.admin_horizon_day);
    get("min_gap_days", cfg.min_gap_days);
    get("max_gap_days", cfg.max_gap_days);
    get("first_exam_day_max", cfg.first_exam_day_max);
    get("texture_radius", cfg.texture_radius);
    get("texture_step_sd", cfg.texture_step_sd);
    get("texture_jump_prob", cfg.texture_jump_prob);
    get("texture_jump_sd", cfg.texture_jump_sd);
    get("feature_noise_sd", cfg.feature_noise_sd);
    get("density_embed_scale", cfg.density_embed_scale);
    get("population_seed", cfg.population_seed);
    get("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

void write_cohort_config_json(const CohortConfig& cfg, const std::string& path) {
    nlohmann::json j{
        {"n_patients", cfg.n_patients},
        {"min_exams", cfg.min_exams},
        {"max_exams", cfg.max_exams},
        {"feature_dim", cfg.feature_dim},
        {"texture_dim", cfg.texture_dim},
        {"init_density", cfg.init_density},
        {"density_transition", cfg.density_transition},
        {"beta_density", cfg.beta_density},
        {"beta_change", cfg.beta_change},
        {"beta_texture", cfg.beta_texture},
        {"lambda0", cfg.lambda0},
        {"admin_horizon_day", cfg.admin_horizon_day},
        {"min_gap_days", cfg.min_gap_days},
        {"max_gap_days", cfg.max_gap_days},
        {"first_exam_day_max", cfg.first_exam_day_max},
        {"texture_radius", cfg.texture_radius},
        {"texture_step_sd", cfg.texture_step_sd},
        {"texture_jump_prob", cfg.texture_jump_prob},
        {"texture_jump_sd", cfg.texture_jump_sd},
        {"feature_noise_sd", cfg.feature_noise_sd},
        {"density_embed_scale", cfg.density_embed_scale},
        {"population_seed", cfg.population_seed},
        {"seed", cfg.seed},
    };
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace priorisk::synthdata
