#include "biasaudit/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "biasaudit/errors.hpp"

namespace biasaudit {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("BIAS_AUDIT_LOG");
        if (!env) return 1;
        const std::string s = env;
        if (s == "debug") return 3;
        if (s == "info") return 2;
        if (s == "warn") return 1;
        return 0; // error
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[info] " << msg << "\n";
}

void log_warn(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[warn] " << msg << "\n";
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << content;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    const fs::path p(path);
    return p.is_absolute() ? path : (fs::path(base_dir) / p).string();
}

template <typename T>
T field(const json& j, const std::string& path, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

} // namespace

std::string config_fingerprint(const std::string& canonical_text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : canonical_text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    if (!j.contains("dataset")) throw ConfigError("dataset: required");
    const json& dj = j.at("dataset");
    const bool has_csv = dj.contains("csv");
    const bool has_synth = dj.contains("synthetic");
    if (has_csv == has_synth) {
        throw ConfigError("dataset: declare exactly one of 'csv' or 'synthetic'");
    }
    if (has_synth) {
        RunConfig::Synthetic s;
        s.count = field<Index>(dj.at("synthetic"), "dataset.synthetic", "count", 305);
        s.seed = field<std::uint64_t>(dj.at("synthetic"), "dataset.synthetic", "seed", 7);
        cfg.synthetic = s;
        cfg.schema = generate_synthetic(8, 0).schema; // fixed synthetic schema
    } else {
        cfg.csv_path = resolve(base_dir, dj.at("csv").get<std::string>());
        if (!dj.contains("schema")) throw ConfigError("dataset.schema: required for csv datasets");
        const json& sj = dj.at("schema");
        if (!sj.contains("columns")) throw ConfigError("dataset.schema.columns: required");
        cfg.schema.columns = sj.at("columns").get<std::vector<std::string>>();
        cfg.schema.protected_features =
            field<std::vector<std::string>>(sj, "dataset.schema", "protected", {});
        if (sj.contains("label")) cfg.schema.label_column = sj.at("label").get<std::string>();
        if (sj.contains("score")) cfg.schema.score_column = sj.at("score").get<std::string>();
        if (sj.contains("weight")) cfg.schema.weight_column = sj.at("weight").get<std::string>();
        if (sj.contains("encodings")) {
            for (const auto& [col, m] : sj.at("encodings").items()) {
                for (const auto& [tok, v] : m.items()) {
                    cfg.schema.encodings[col][tok] = v.get<double>();
                }
            }
        }
        try {
            cfg.schema.validate();
        } catch (const SchemaError& e) {
            throw ConfigError(std::string("dataset.schema: ") + e.what());
        }
        cfg.parse.drop_missing = field<bool>(dj, "dataset", "drop_missing", true);
        if (cfg.schema.protected_features.empty()) {
            throw ConfigError("dataset.schema.protected: must name at least one protected feature");
        }
    }

    if (j.contains("model")) {
        const json& mj = j.at("model");
        const int sources = int(mj.contains("train_tree")) + int(mj.contains("external")) +
                            int(mj.contains("predictions_file"));
        if (sources > 1) throw ConfigError("model: declare at most one source");
        if (mj.contains("external")) {
            cfg.model_source = RunConfig::ModelSource::External;
            const json& ej = mj.at("external");
            if (!ej.contains("command")) throw ConfigError("model.external.command: required");
            cfg.external_command = ej.at("command").get<std::string>();
            cfg.external_exchange_dir =
                resolve(base_dir, field<std::string>(ej, "model.external", "exchange_dir", "."));
            cfg.external_timeout_seconds =
                field<double>(ej, "model.external", "timeout_seconds", 60.0);
        } else if (mj.contains("predictions_file")) {
            cfg.model_source = RunConfig::ModelSource::PredictionsFile;
            cfg.predictions_path = resolve(base_dir, mj.at("predictions_file").get<std::string>());
        }
        if (mj.contains("train_tree")) {
            const json& tj = mj.at("train_tree");
            cfg.pipeline.tree.min_samples_split =
                field<Index>(tj, "model.train_tree", "min_samples_split", 2);
            cfg.pipeline.tree.max_depth = field<Index>(tj, "model.train_tree", "max_depth", -1);
        }
    }

    if (j.contains("convention")) {
        const std::string c = j.at("convention").get<std::string>();
        if (c == "corrected") cfg.pipeline.convention = Convention::Corrected;
        else if (c == "verbatim") cfg.pipeline.convention = Convention::Verbatim;
        else throw ConfigError("convention: expected 'corrected' or 'verbatim'");
    }

    if (j.contains("loss")) {
        const json& lj = j.at("loss");
        auto& l = cfg.pipeline.loss;
        l.lambda1 = field<double>(lj, "loss", "lambda1", l.lambda1);
        l.lambda2 = field<double>(lj, "loss", "lambda2", l.lambda2);
        l.lambda3 = field<double>(lj, "loss", "lambda3", l.lambda3);
        l.epsilon = field<double>(lj, "loss", "epsilon", l.epsilon);
        l.fd_step = field<double>(lj, "loss", "fd_step", l.fd_step);
        l.clamp_perturbed = field<bool>(lj, "loss", "clamp_perturbed", l.clamp_perturbed);
        if (l.lambda1 < 0 || l.lambda2 < 0 || l.lambda3 < 0) {
            throw ConfigError("loss.lambda values must be non-negative");
        }
        if (l.epsilon <= 0) throw ConfigError("loss.epsilon: must be positive");
        if (l.fd_step <= 0) throw ConfigError("loss.fd_step: must be positive");
    }

    if (j.contains("train")) {
        const json& tj = j.at("train");
        auto& t = cfg.pipeline.train;
        t.batch_size = field<Index>(tj, "train", "batch_size", t.batch_size);
        t.epochs = field<Index>(tj, "train", "epochs", t.epochs);
        t.learning_rate = field<double>(tj, "train", "learning_rate", t.learning_rate);
        t.seed = field<std::uint64_t>(tj, "train", "seed", t.seed);
        if (t.batch_size < 2) throw ConfigError("train.batch_size: must be at least 2");
        if (t.epochs < 1) throw ConfigError("train.epochs: must be at least 1");
    }

    if (j.contains("generator")) {
        const json& gj = j.at("generator");
        auto& g = cfg.pipeline.generator;
        g.hidden_layers = field<Index>(gj, "generator", "hidden_layers", g.hidden_layers);
        g.hidden_units = field<Index>(gj, "generator", "hidden_units", g.hidden_units);
        g.init_gain = field<double>(gj, "generator", "init_gain", g.init_gain);
    }

    cfg.pipeline.run_network = field<bool>(j, "", "network", true);

    if (j.contains("metrics")) {
        const json& mj = j.at("metrics");
        auto& m = cfg.pipeline.metrics;
        m.prediction_threshold = field<double>(mj, "metrics", "prediction_threshold", 0.5);
        m.calibration_bins = field<int>(mj, "metrics", "calibration_bins", 10);
        if (mj.contains("score_threshold") && !mj.at("score_threshold").is_null()) {
            m.score_threshold = mj.at("score_threshold").get<double>();
        }
        if (m.calibration_bins < 1) throw ConfigError("metrics.calibration_bins: must be positive");
    }

    if (j.contains("guidelines")) {
        const json& gj = j.at("guidelines");
        auto& g = cfg.pipeline.guidelines;
        g.g1_slack = field<double>(gj, "guidelines", "g1_slack", g.g1_slack);
        g.g3_bound = field<double>(gj, "guidelines", "g3_bound", g.g3_bound);
        g.delta_deadzone = field<double>(gj, "guidelines", "delta_deadzone", g.delta_deadzone);
    }

    if (j.contains("mitigation")) {
        const json& mj = j.at("mitigation");
        cfg.mitigation.feature = field<std::string>(mj, "mitigation", "feature", "");
        cfg.mitigation.config.positive_contribution_weight =
            field<double>(mj, "mitigation", "positive_weight", 1.0);
        cfg.mitigation.config.other_weight = field<double>(mj, "mitigation", "other_weight", 0.1);
        cfg.mitigation.config.variance_threshold =
            field<double>(mj, "mitigation", "variance_threshold", 0.0045);
        cfg.mitigation.config.max_iterations =
            field<long>(mj, "mitigation", "max_iterations", 200000);
        cfg.mitigation.chain_audit = field<bool>(mj, "mitigation", "chain_audit", true);
    }

    if (j.contains("folds")) {
        const json& fj = j.at("folds");
        cfg.fold_count = field<int>(fj, "folds", "k", 5);
        cfg.fold_seed = field<std::uint64_t>(fj, "folds", "seed", 31);
        cfg.pipeline.strict_folds = field<bool>(fj, "folds", "strict", true);
        if (*cfg.fold_count < 2) throw ConfigError("folds.k: must be at least 2");
    }

    cfg.output_dir = resolve(base_dir, field<std::string>(j, "", "output", "."));
    cfg.guideline_exit_code = field<bool>(j, "", "guideline_exit_code", true);

    // The generator must be able to query the model on perturbed samples.
    if (cfg.model_source == RunConfig::ModelSource::PredictionsFile && cfg.pipeline.run_network) {
        throw ConfigError("model.predictions_file: a fixed prediction vector cannot be queried on "
                          "perturbed samples; set \"network\": false or provide a queryable model");
    }
    if (cfg.model_source == RunConfig::ModelSource::PredictionsFile && cfg.fold_count) {
        throw ConfigError("model.predictions_file: fixed predictions cover the whole dataset and "
                          "cannot answer per-fold splits; remove \"folds\"");
    }

    cfg.config_hash = config_fingerprint(json::parse(json_text).dump());
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    const std::string text = slurp_file(path);
    return parse_run_config(text, fs::path(path).parent_path().string());
}

Dataset load_configured_dataset(const RunConfig& cfg) {
    if (cfg.synthetic) {
        return generate_synthetic(cfg.synthetic->count, cfg.synthetic->seed);
    }
    Dataset ds = load_csv(*cfg.csv_path, cfg.schema, cfg.parse);
    log_info("loaded " + std::to_string(ds.row_count()) + " rows, " +
             std::to_string(ds.feature_count()) + " features from " + *cfg.csv_path);
    return ds;
}

ModelFactory build_model_factory(const RunConfig& cfg, const Dataset& ds) {
    switch (cfg.model_source) {
        case RunConfig::ModelSource::TrainTree:
            return tree_factory(cfg.pipeline.tree);
        case RunConfig::ModelSource::External: {
            auto base = std::make_shared<const ExternalModel>(
                cfg.external_command, cfg.external_exchange_dir, cfg.external_timeout_seconds,
                ds.feature_count());
            return [base](const Dataset&, const std::vector<ColumnScale>& scalers) {
                return std::make_shared<const RescaledPredictor>(base, scalers);
            };
        }
        case RunConfig::ModelSource::PredictionsFile: {
            auto base = std::make_shared<const PrecomputedPredictor>(
                PrecomputedPredictor::from_file(cfg.predictions_path, ds.feature_count()));
            return [base](const Dataset&, const std::vector<ColumnScale>&) {
                return std::static_pointer_cast<const Predictor>(base);
            };
        }
    }
    throw ConfigError("model: unknown source");
}

namespace {

void stamp_and_write(const fs::path& path, const std::string& content, const std::string& hash) {
    write_file(path, "# config_hash " + hash + "\n" + content);
}

void write_audit_outputs(const RunConfig& cfg, const BiasReport& report, const SplitOutcome& split,
                         const std::string& suffix = "") {
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    write_file(out / ("report" + suffix + ".json"), report.to_json());
    write_file(out / ("report" + suffix + ".txt"), report.to_text());
    stamp_and_write(out / ("metrics" + suffix + ".csv"), metrics_to_csv(split.metric_results),
                    cfg.config_hash);
    if (split.train_log) {
        stamp_and_write(out / ("training_log" + suffix + ".csv"), split.train_log->to_csv(),
                        cfg.config_hash);
    }
    if (!split.generator_json.empty()) {
        json gen = json::parse(split.generator_json);
        gen["config_hash"] = cfg.config_hash;
        write_file(out / ("generator" + suffix + ".json"), gen.dump());
    }
}

} // namespace

int run_audit(const RunConfig& cfg) {
    const Dataset ds = load_configured_dataset(cfg);
    const ModelFactory factory = build_model_factory(cfg, ds);

    BiasReport report;
    if (cfg.fold_count) {
        const FoldPlan plan = make_folds(ds.row_count(), *cfg.fold_count, cfg.fold_seed);
        const CvOutcome cv = cross_validate(ds, plan, factory, cfg.pipeline);
        report = make_report(cv, cfg.pipeline, cfg.config_hash);
        report.fold_seed = cfg.fold_seed;
        for (const auto& w : cv.warnings) log_warn(w);

        const fs::path out(cfg.output_dir);
        fs::create_directories(out);
        write_file(out / "report.json", report.to_json());
        write_file(out / "report.txt", report.to_text());
        if (!cv.folds.empty()) {
            stamp_and_write(out / "metrics.csv", metrics_to_csv(cv.folds.front().metric_results),
                            cfg.config_hash);
        }
    } else {
        const SplitOutcome split = audit_split(ds, ds, factory, cfg.pipeline);
        report = make_report(split, cfg.pipeline, cfg.config_hash);
        write_audit_outputs(cfg, report, split);
    }

    std::cout << report.to_text();
    if (cfg.pipeline.run_network && cfg.guideline_exit_code && !report.guidelines.all_pass()) {
        return 2;
    }
    return 0;
}

int run_mitigate(const RunConfig& cfg) {
    Dataset ds = load_configured_dataset(cfg);
    if (!ds.labels) throw ConfigError("mitigation requires a labeled dataset");
    std::string feature = cfg.mitigation.feature;
    if (feature.empty()) {
        if (ds.schema.protected_features.empty()) throw ConfigError("mitigation.feature: required");
        feature = ds.schema.protected_features.front();
    }

    const fs::path out(cfg.output_dir);
    fs::create_directories(out);

    auto save_stamped = [&](const Dataset& d) {
        const fs::path path = out / "mitigated.csv";
        save_csv(d, path.string());
        stamp_and_write(path, slurp_file(path.string()), cfg.config_hash);
    };

    const double initial = group_positive_variance(ds, feature);
    if (initial <= cfg.mitigation.config.variance_threshold) {
        log_info("variance " + std::to_string(initial) + " already at or below threshold; dataset unchanged");
        save_stamped(ds);
        MitigationLog log;
        log.initial_variance = log.final_variance = initial;
        log.reached_threshold = true;
        stamp_and_write(out / "mitigation_log.csv", log.to_csv(), cfg.config_hash);
        return 0;
    }

    auto [mitigated, log] = reweight(ds, feature, cfg.mitigation.config);
    save_stamped(mitigated);
    stamp_and_write(out / "mitigation_log.csv", log.to_csv(), cfg.config_hash);
    log_info("variance " + std::to_string(log.initial_variance) + " -> " +
             std::to_string(log.final_variance) + " in " + std::to_string(log.steps.size()) +
             " replications");

    if (cfg.mitigation.chain_audit) {
        const ModelFactory factory = build_model_factory(cfg, ds);

        // Before: model fit on the original data. After: model refit on the
        // re-weighted data; both evaluated on the original rows.
        const SplitOutcome before = audit_split(ds, ds, factory, cfg.pipeline);
        const BiasReport before_report = make_report(before, cfg.pipeline, cfg.config_hash);
        const SplitOutcome after = audit_split(mitigated, ds, factory, cfg.pipeline);
        const BiasReport after_report = make_report(after, cfg.pipeline, cfg.config_hash);

        write_file(out / "report_before.json", before_report.to_json());
        write_file(out / "report_after.json", after_report.to_json());
        const auto deltas =
            mitigation_delta(before_report, after_report, cfg.pipeline.guidelines.delta_deadzone);
        stamp_and_write(out / "delta.csv", deltas_to_csv(deltas), cfg.config_hash);
        for (const auto& d : deltas) {
            std::cout << d.feature << ": ensemble " << d.ensemble_delta << ", network "
                      << d.network_delta << (d.agree ? " (agree)" : " (disagree)") << "\n";
        }
    }
    return 0;
}

int run_synth(Index count, std::uint64_t seed, const std::optional<std::string>& out_path) {
    const Dataset ds = generate_synthetic(count, seed);
    if (out_path) {
        save_csv(ds, *out_path);
    } else {
        const std::string tmp = (fs::temp_directory_path() / "synthetic_stdout.csv").string();
        save_csv(ds, tmp);
        std::cout << slurp_file(tmp);
        fs::remove(tmp);
    }
    return 0;
}

int run_metrics(const RunConfig& cfg, const std::optional<std::string>& out_path) {
    const Dataset ds = load_configured_dataset(cfg);
    const ModelFactory factory = build_model_factory(cfg, ds);

    PipelineConfig pipeline = cfg.pipeline;
    pipeline.run_network = false;
    const SplitOutcome split = audit_split(ds, ds, factory, pipeline);

    // One entry per (metric, feature); metrics whose inputs are missing are
    // kept in the array with a null value and an "unavailable" flag.
    json arr = json::array();
    for (const auto& [feature, result] : split.metric_results) {
        for (const auto& e : result.estimates) {
            json flags = json::array();
            if (e.flags.degenerate) flags.push_back("degenerate");
            if (e.flags.saturated) flags.push_back("saturated");
            arr.push_back({{"metric", metric_name(e.metric)},
                           {"feature", feature},
                           {"value", e.value},
                           {"convention",
                            e.convention == Convention::Corrected ? "corrected" : "verbatim"},
                           {"flags", flags}});
        }
        for (const MetricId id : result.unavailable) {
            arr.push_back({{"metric", metric_name(id)},
                           {"feature", feature},
                           {"value", nullptr},
                           {"convention",
                            cfg.pipeline.convention == Convention::Corrected ? "corrected" : "verbatim"},
                           {"flags", json::array({"unavailable"})}});
        }
    }
    const std::string payload = arr.dump(2);
    if (out_path) {
        write_file(*out_path, payload);
        const fs::path csv = fs::path(*out_path).replace_extension(".csv");
        stamp_and_write(csv, metrics_to_csv(split.metric_results), cfg.config_hash);
    } else {
        std::cout << payload << "\n";
    }
    return 0;
}

int run_ensemble(const std::string& metrics_json_path, const std::optional<std::string>& out_path) {
    const auto j = json::parse(slurp_file(metrics_json_path));
    std::map<std::string, EstimateAllResult> per_feature;
    for (const auto& e : j) {
        const auto id = metric_from_name(e.at("metric").get<std::string>());
        if (!id) throw ParseError("unknown metric '" + e.at("metric").get<std::string>() + "'");
        if (e.at("value").is_null()) continue; // marked unavailable upstream
        MetricEstimate est;
        est.metric = *id;
        est.feature = e.at("feature").get<std::string>();
        est.value = e.at("value").get<double>();
        est.convention =
            e.value("convention", "corrected") == "verbatim" ? Convention::Verbatim : Convention::Corrected;
        per_feature[est.feature].estimates.push_back(std::move(est));
    }
    json outj;
    for (auto& [feature, result] : per_feature) {
        const EnsembleEntry entry = aggregate(result, feature);
        outj[feature] = {{"value", entry.value}, {"argmax", metric_name(entry.argmax)}};
    }
    const std::string payload = outj.dump(2);
    if (out_path) write_file(*out_path, payload);
    else std::cout << payload << "\n";
    return 0;
}

} // namespace biasaudit
