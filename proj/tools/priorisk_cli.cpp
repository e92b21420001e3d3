#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "priorisk/errors.hpp"
#include "priorisk/metrics.hpp"
#include "priorisk/model.hpp"
#include "priorisk/pipeline.hpp"
#include "priorisk/rng.hpp"
#include "priorisk/synthdata.hpp"
#include "priorisk/train.hpp"

namespace {

using namespace priorisk;

int run_synth(const std::string& config_path, std::uint64_t seed, bool seed_set, int n_patients,
              const std::string& out, const std::string& oracle_out,
              const std::string& config_out) {
    synthdata::CohortConfig cfg;
    if (!config_path.empty()) cfg = synthdata::cohort_config_from_json_file(config_path);
    if (seed_set) cfg.seed = seed;
    if (n_patients > 0) cfg.n_patients = n_patients;
    cfg.validate();

    synthdata::Cohort cohort = synthdata::generate_cohort(cfg);
    synthdata::write_csv(cohort, out);
    if (!oracle_out.empty()) synthdata::write_oracle_csv(cohort, oracle_out);
    if (!config_out.empty()) synthdata::write_cohort_config_json(cfg, config_out);

    long events = 0;
    for (char e : cohort.event) events += e ? 1 : 0;
    std::size_t n = cohort.size();
    std::printf("cohort: patients=%d exams=%zu scoreable=%zu events=%ld censoring_rate=%.3f\n",
                cfg.n_patients, n, cohort.sample_rows().size(), events,
                n ? 1.0 - static_cast<double>(events) / static_cast<double>(n) : 0.0);
    std::printf("wrote %s\n", out.c_str());
    if (!oracle_out.empty()) std::printf("wrote %s\n", oracle_out.c_str());
    return 0;
}

int run_train(const std::string& data_path, const std::string& variant_name,
              const std::string& out, const std::string& history_out,
              const train::TrainConfig& tcfg, model::ModelDims dims) {
    synthdata::Cohort cohort = synthdata::load_csv(data_path);
    dims.feature_dim = cohort.feature_dim;
    dims.validate();
    model::Variant variant = model::variant_from_name(variant_name);

    model::ModelParams params0 =
        model::ModelParams::seeded(dims, variant, mix_seed(tcfg.seed, 0x1217));
    train::TrainResult result = train::run_training(cohort, std::move(params0), tcfg);

    model::save_checkpoint(result.params, out);
    if (!history_out.empty()) train::write_history_csv(result.history, history_out);

    if (result.aborted)
        std::printf("training aborted after %zu steps (%s); checkpoint holds the last good "
                    "parameters\n",
                    result.history.size(), result.abort_reason.c_str());
    if (!result.history.empty())
        std::printf("train: variant=%s steps=%zu first_loss=%.6f final_loss=%.6f\n",
                    variant_name.c_str(), result.history.size(), result.history.front().loss,
                    result.history.back().loss);
    std::printf("wrote %s\n", out.c_str());
    return result.aborted ? 4 : 0;
}

int run_eval(const std::string& data_path, const std::string& model_path,
             const std::string& oracle_path, const std::string& scores_out,
             const std::string& report_out, int bootstrap_B, std::uint64_t seed,
             const std::string& name, int oracle_horizon) {
    synthdata::Cohort cohort = synthdata::load_csv(data_path);
    metrics::RiskDataset scored;
    if (!oracle_path.empty()) {
        synthdata::load_oracle_csv(cohort, oracle_path);
        scored = pipeline::oracle_scores(cohort, oracle_horizon);
    } else {
        if (model_path.empty())
            throw ConfigError("eval needs --model (or --oracle for ground-truth scoring)");
        model::ModelParams params = model::load_checkpoint(model_path);
        scored = pipeline::score_cohort(cohort, params);
    }
    pipeline::write_scores_csv(scored, scores_out);
    std::printf("scored %zu subjects from %s\n", scored.size(), name.c_str());
    std::printf("wrote %s\n", scores_out.c_str());

    if (!report_out.empty()) {
        metrics::MetricReport report = metrics::evaluate_dataset(scored, bootstrap_B, seed);
        pipeline::write_metric_report_csv(report, report_out);
        std::fputs(pipeline::format_metric_report_table(report, name).c_str(), stdout);
        std::printf("wrote %s\n", report_out.c_str());
    }
    return 0;
}

int run_compare(const std::string& scores_a, const std::string& scores_b,
                const std::string& out, const std::string& name_a, const std::string& name_b) {
    metrics::RiskDataset a = pipeline::load_scores_csv(scores_a);
    metrics::RiskDataset b = pipeline::load_scores_csv(scores_b);
    pipeline::ComparisonReport report = pipeline::compare_scored(a, b);
    if (!out.empty()) pipeline::write_comparison_csv(report, out);
    std::fputs(pipeline::format_comparison_table(report, name_a, name_b).c_str(), stdout);
    if (!out.empty()) std::printf("wrote %s\n", out.c_str());
    return 0;
}

int run_subgroup(const std::string& scores_path, const std::string& out, int bootstrap_B,
                 std::uint64_t seed) {
    metrics::RiskDataset scored = pipeline::load_scores_csv(scores_path);
    metrics::SubgroupReport report = metrics::subgroup_report(scored, bootstrap_B, seed);
    if (!out.empty()) metrics::write_report_csv(report, out);
    std::fputs(metrics::format_report_table(report).c_str(), stdout);
    if (!out.empty()) std::printf("wrote %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prior-exam-aware risk prediction pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort CSV");
    std::string sy_config, sy_out = "cohort.csv", sy_oracle, sy_config_out;
    std::uint64_t sy_seed = 0;
    int sy_patients = 0;
    synth->add_option("--config", sy_config, "cohort config JSON");
    auto* sy_seed_opt = synth->add_option("--seed", sy_seed, "generator seed");
    synth->add_option("--n-patients", sy_patients, "override patient count");
    synth->add_option("--out", sy_out, "output cohort CSV")->capture_default_str();
    synth->add_option("--oracle", sy_oracle, "also write ground-truth rate sidecar CSV");
    synth->add_option("--write-config", sy_config_out, "write the effective config as JSON");

    // train
    auto* tr = app.add_subcommand("train", "train a variant on a cohort CSV");
    std::string tr_data, tr_variant, tr_out = "model.ckpt", tr_history;
    train::TrainConfig tcfg;
    model::ModelDims dims;
    tr->add_option("--data", tr_data, "cohort CSV")->required();
    tr->add_option("--variant", tr_variant, "baseline | rp_plus | prime")->required();
    tr->add_option("--out", tr_out, "checkpoint path")->capture_default_str();
    tr->add_option("--history", tr_history, "training history CSV");
    tr->add_option("--steps", tcfg.total_steps, "SGD steps")->capture_default_str();
    tr->add_option("--batch", tcfg.batch_size, "minibatch size")->capture_default_str();
    tr->add_option("--lr0", tcfg.lr0, "peak learning rate")->capture_default_str();
    tr->add_option("--momentum", tcfg.momentum, "SGD momentum")->capture_default_str();
    tr->add_option("--weight-decay", tcfg.weight_decay, "L2 coefficient")->capture_default_str();
    tr->add_option("--seed", tcfg.seed, "training seed");
    tr->add_option("--d-model", dims.d_model, "encoder width")->capture_default_str();
    tr->add_option("--heads", dims.n_heads, "attention heads")->capture_default_str();
    tr->add_option("--tokens", dims.n_tokens, "prior tokens")->capture_default_str();
    tr->add_option("--horizon", dims.horizon, "yearly horizons")->capture_default_str();
    tr->add_option("--encoder-layers", dims.encoder_layers, "encoder depth")
        ->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "score a cohort and report metrics");
    std::string ev_data, ev_model, ev_oracle, ev_scores = "scores.csv", ev_report, ev_name;
    int ev_boot = 1000, ev_oracle_horizon = 5;
    std::uint64_t ev_seed = 0;
    ev->add_option("--data", ev_data, "cohort CSV")->required();
    ev->add_option("--model", ev_model, "model checkpoint");
    ev->add_option("--oracle", ev_oracle, "ground-truth rate sidecar (scores by true rates)");
    ev->add_option("--oracle-horizon", ev_oracle_horizon, "horizon for oracle scoring")
        ->capture_default_str();
    ev->add_option("--out", ev_scores, "per-subject score CSV")->capture_default_str();
    ev->add_option("--report", ev_report, "metric report CSV (with bootstrap CIs)");
    ev->add_option("--bootstrap", ev_boot, "bootstrap replicates")->capture_default_str();
    ev->add_option("--seed", ev_seed, "bootstrap seed");
    ev->add_option("--name", ev_name, "split label for the summary");

    // compare
    auto* cp = app.add_subcommand("compare", "paired significance tests for two score sets");
    std::string cp_a, cp_b, cp_out, cp_name_a = "model_a", cp_name_b = "model_b";
    cp->add_option("--scores-a", cp_a, "score CSV for model A")->required();
    cp->add_option("--scores-b", cp_b, "score CSV for model B")->required();
    cp->add_option("--out", cp_out, "comparison CSV");
    cp->add_option("--name-a", cp_name_a, "label for model A")->capture_default_str();
    cp->add_option("--name-b", cp_name_b, "label for model B")->capture_default_str();

    // subgroup
    auto* sg = app.add_subcommand("subgroup", "subgroup metric report from a score set");
    std::string sg_scores, sg_out;
    int sg_boot = 1000;
    std::uint64_t sg_seed = 0;
    sg->add_option("--scores", sg_scores, "score CSV")->required();
    sg->add_option("--out", sg_out, "report CSV");
    sg->add_option("--bootstrap", sg_boot, "bootstrap replicates")->capture_default_str();
    sg->add_option("--seed", sg_seed, "bootstrap seed");

    try {
        app.parse(argc, argv);
        if (synth->parsed())
            return run_synth(sy_config, sy_seed, !sy_seed_opt->empty(), sy_patients, sy_out,
                             sy_oracle, sy_config_out);
        if (tr->parsed()) return run_train(tr_data, tr_variant, tr_out, tr_history, tcfg, dims);
        if (ev->parsed()) {
            if (ev_name.empty()) ev_name = ev_data;
            return run_eval(ev_data, ev_model, ev_oracle, ev_scores, ev_report, ev_boot,
                            ev_seed, ev_name, ev_oracle_horizon);
        }
        if (cp->parsed()) return run_compare(cp_a, cp_b, cp_out, cp_name_a, cp_name_b);
        if (sg->parsed()) return run_subgroup(sg_scores, sg_out, sg_boot, sg_seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems count as config errors
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
