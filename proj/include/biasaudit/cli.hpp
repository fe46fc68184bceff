#pragma once

#include <optional>
#include <string>

#include "biasaudit/dataset.hpp"
#include "biasaudit/evaluation.hpp"
#include "biasaudit/mitigation.hpp"

namespace biasaudit {

// Declarative description of one audit run; normally parsed from a JSON
// config file, with CLI flags layered on top.
struct RunConfig {
    // dataset source: exactly one of csv_path / synthetic
    std::optional<std::string> csv_path;
    DatasetSchema schema;
    ParseOptions parse;
    struct Synthetic {
        Index count = 305;
        std::uint64_t seed = 7;
    };
    std::optional<Synthetic> synthetic;

    // model source: exactly one
    enum class ModelSource { TrainTree, External, PredictionsFile };
    ModelSource model_source = ModelSource::TrainTree;
    std::string external_command;
    std::string external_exchange_dir = ".";
    double external_timeout_seconds = 60.0;
    std::string predictions_path;

    PipelineConfig pipeline;

    struct Mitigation {
        std::string feature; // defaults to the first protected feature
        MitigationConfig config;
        bool chain_audit = true;
    };
    Mitigation mitigation;

    std::optional<int> fold_count; // enables cross-validation
    std::uint64_t fold_seed = 31;

    std::string output_dir = ".";
    bool guideline_exit_code = true; // exit 2 when a guideline fails

    std::string config_hash; // filled by the loader
};

// Parses and validates a config document; throws ConfigError with the
// offending field path. Relative paths resolve against the config file.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir);

Dataset load_configured_dataset(const RunConfig& cfg);
ModelFactory build_model_factory(const RunConfig& cfg, const Dataset& ds);

// Subcommand bodies. Exit codes: 0 success, 1 error (thrown), 2 guideline
// failure (run_audit, when enabled).
int run_audit(const RunConfig& cfg);
int run_mitigate(const RunConfig& cfg);
int run_synth(Index count, std::uint64_t seed, const std::optional<std::string>& out_path);
int run_metrics(const RunConfig& cfg, const std::optional<std::string>& out_path);
int run_ensemble(const std::string& metrics_json_path, const std::optional<std::string>& out_path);

// FNV-1a over the canonical config text; stamped into every output file.
std::string config_fingerprint(const std::string& canonical_text);

} // namespace biasaudit
