// Command-line front end: audit, mitigate, synth, metrics, ensemble.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "biasaudit/cli.hpp"
#include "biasaudit/errors.hpp"

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> convention;
    std::optional<biasaudit::Index> epochs;
    std::optional<biasaudit::Index> batch;
    std::optional<double> lambda1, lambda2, lambda3;
    std::optional<double> eps, fd_step, learning_rate;
    std::optional<double> threshold_variance;
    std::optional<int> folds;
    std::optional<std::string> out_dir;
};

void add_override_flags(CLI::App* cmd, Overrides& o, bool with_out = true) {
    if (with_out) cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "generator training seed");
    cmd->add_option("--convention", o.convention, "metric convention: corrected|verbatim");
    cmd->add_option("--epochs", o.epochs, "generator training epochs");
    cmd->add_option("--batch", o.batch, "mini-batch size");
    cmd->add_option("--lambda1", o.lambda1, "prediction-change loss weight");
    cmd->add_option("--lambda2", o.lambda2, "feature-selection loss weight");
    cmd->add_option("--lambda3", o.lambda3, "similarity loss weight");
    cmd->add_option("--eps", o.eps, "nonzero-count surrogate sharpness");
    cmd->add_option("--fd-step", o.fd_step, "zeroth-order probe step");
    cmd->add_option("--lr", o.learning_rate, "learning rate");
    cmd->add_option("--threshold-variance", o.threshold_variance, "mitigation variance threshold");
    cmd->add_option("--folds", o.folds, "cross-validation fold count");
}

void apply(const Overrides& o, biasaudit::RunConfig& cfg) {
    if (o.seed) cfg.pipeline.train.seed = *o.seed;
    if (o.convention) {
        if (*o.convention == "corrected") cfg.pipeline.convention = biasaudit::Convention::Corrected;
        else if (*o.convention == "verbatim") cfg.pipeline.convention = biasaudit::Convention::Verbatim;
        else throw biasaudit::ConfigError("--convention: expected 'corrected' or 'verbatim'");
    }
    if (o.epochs) cfg.pipeline.train.epochs = *o.epochs;
    if (o.batch) cfg.pipeline.train.batch_size = *o.batch;
    if (o.lambda1) cfg.pipeline.loss.lambda1 = *o.lambda1;
    if (o.lambda2) cfg.pipeline.loss.lambda2 = *o.lambda2;
    if (o.lambda3) cfg.pipeline.loss.lambda3 = *o.lambda3;
    if (o.eps) cfg.pipeline.loss.epsilon = *o.eps;
    if (o.fd_step) cfg.pipeline.loss.fd_step = *o.fd_step;
    if (o.learning_rate) cfg.pipeline.train.learning_rate = *o.learning_rate;
    if (o.threshold_variance) cfg.mitigation.config.variance_threshold = *o.threshold_variance;
    if (o.folds) cfg.fold_count = *o.folds;
    if (o.out_dir) cfg.output_dir = *o.out_dir;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fairness auditing: scaled bias metrics, a max ensemble, an unsupervised "
                 "bias-vector network, re-weighting mitigation, and alignment guidelines"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides overrides;

    auto* audit = app.add_subcommand("audit", "full audit: metrics, ensemble, network, guidelines");
    audit->add_option("--config", config_path, "run config JSON")->required();
    add_override_flags(audit, overrides);

    auto* mitigate = app.add_subcommand("mitigate", "re-weighting mitigation, optionally chained audits");
    mitigate->add_option("--config", config_path, "run config JSON")->required();
    add_override_flags(mitigate, overrides);

    auto* synth = app.add_subcommand("synth", "emit the synthetic sanity-check dataset as CSV");
    biasaudit::Index synth_count = 305;
    std::uint64_t synth_seed = 7;
    std::optional<std::string> synth_out;
    synth->add_option("--count", synth_count, "sample count");
    synth->add_option("--seed", synth_seed, "random-feature seed");
    synth->add_option("--out", synth_out, "output CSV path (stdout when absent)");

    auto* metrics = app.add_subcommand("metrics", "per-feature metric estimations only");
    metrics->add_option("--config", config_path, "run config JSON")->required();
    std::optional<std::string> metrics_out;
    metrics->add_option("--out", metrics_out, "output JSON path (stdout when absent)");
    add_override_flags(metrics, overrides, /*with_out=*/false);

    auto* ensemble = app.add_subcommand("ensemble", "aggregate a metrics JSON into per-feature maxima");
    std::string ensemble_in;
    std::optional<std::string> ensemble_out;
    ensemble->add_option("metrics_json", ensemble_in, "metrics JSON produced by the metrics command")
        ->required();
    ensemble->add_option("--out", ensemble_out, "output JSON path (stdout when absent)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return biasaudit::run_synth(synth_count, synth_seed, synth_out);
        if (ensemble->parsed()) return biasaudit::run_ensemble(ensemble_in, ensemble_out);

        biasaudit::RunConfig cfg = biasaudit::load_run_config(config_path);
        apply(overrides, cfg);
        if (audit->parsed()) return biasaudit::run_audit(cfg);
        if (mitigate->parsed()) return biasaudit::run_mitigate(cfg);
        if (metrics->parsed()) return biasaudit::run_metrics(cfg, metrics_out);
    } catch (const biasaudit::AuditError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
