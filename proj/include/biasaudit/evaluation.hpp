#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biasaudit/dataset.hpp"
#include "biasaudit/ensemble.hpp"
#include "biasaudit/generator.hpp"
#include "biasaudit/metrics.hpp"
#include "biasaudit/model.hpp"

namespace biasaudit {

struct GuidelineConfig {
    // Expression-level slack for "network >= ensemble": the published
    // reference numbers themselves undershoot by 0.0052 on one feature.
    double g1_slack = 0.01;
    double g3_bound = 0.002;
    double delta_deadzone = 0.005; // |change| below this counts as no change
};

struct GuidelineVerdicts {
    bool g1_pass = false;
    double g1_worst_slack = 0.0; // max over features of (ensemble - network)
    bool g2_pass = false;
    bool g2_degenerate = false; // single protected feature
    bool g3_pass = false;
    bool g3_degenerate = false;
    double g3_variance = 0.0; // sample variance of the differences
    double g3_bound = 0.0;

    bool all_pass() const { return g1_pass && g2_pass && g3_pass; }
};

// G1: network estimation at least the ensemble's, up to the slack.
// G2: identical descending rankings (degenerate-true for one feature).
// G3: near-constant network-minus-ensemble differences, as a variance bound.
GuidelineVerdicts check_guidelines(const std::map<std::string, double>& network,
                                   const std::map<std::string, double>& ensemble,
                                   const GuidelineConfig& cfg);

// Descending rank (1 = most biased), ties broken by feature name.
std::map<std::string, int> rank_descending(const std::map<std::string, double>& values);

struct PipelineConfig {
    TreeConfig tree;
    GeneratorConfig generator;
    LossConfig loss;
    TrainConfig train;
    Convention convention = Convention::Corrected;
    MetricOptions metrics;
    GuidelineConfig guidelines;
    bool run_network = true;  // train the generator (off for metrics-only audits)
    bool strict_folds = true; // error instead of skipping folds that miss a protected value
};

// Builds the predictor for one (normalized) training split. The scalers map
// normalized space back to the raw feature domain for models that were
// trained outside this process.
using ModelFactory = std::function<std::shared_ptr<const Predictor>(
    const Dataset& normalized_train, const std::vector<ColumnScale>& scalers)>;

ModelFactory tree_factory(const TreeConfig& cfg);

struct SplitOutcome {
    std::map<std::string, double> network;    // per protected feature
    std::map<std::string, double> ensemble;
    std::map<std::string, std::string> ensemble_argmax;
    std::map<std::string, EstimateAllResult> metric_results;
    Vector network_full;                      // post-processed estimate, all features
    std::shared_ptr<const Predictor> model;
    std::optional<TrainLog> train_log;
    std::string generator_json;               // empty when the network part is off
};

// One train/evaluate pass: normalize on the training rows, fit the model,
// train the generator against it, evaluate metrics and bias vectors on the
// evaluation rows.
SplitOutcome audit_split(const Dataset& train, const Dataset& eval, const ModelFactory& factory,
                         const PipelineConfig& cfg);

struct FeatureFoldStats {
    double network_mean = 0.0, network_std = 0.0;
    double ensemble_mean = 0.0, ensemble_std = 0.0;
    std::vector<double> network_per_fold, ensemble_per_fold;
};

struct CvOutcome {
    std::vector<SplitOutcome> folds;
    std::map<std::string, FeatureFoldStats> stats;
    std::vector<std::string> warnings; // skipped folds under the permissive flag
};

// Per-fold audit passes with mean / population standard deviation per
// feature. Fold f trains with seed train.seed + f.
CvOutcome cross_validate(const Dataset& ds, const FoldPlan& plan, const ModelFactory& factory,
                         const PipelineConfig& cfg);

struct FeatureReport {
    std::string feature;
    double network = 0.0;
    double ensemble = 0.0;
    int network_rank = 0;
    int ensemble_rank = 0;
    double difference = 0.0; // network - ensemble
    std::string ensemble_argmax;
    std::optional<FeatureFoldStats> folds;
};

struct BiasReport {
    static constexpr int kVersion = 1;

    std::string convention = "corrected";
    std::uint64_t train_seed = 0;
    std::optional<std::uint64_t> fold_seed;
    std::vector<FeatureReport> features; // ordered by feature name
    GuidelineVerdicts guidelines;
    double differences_variance = 0.0;
    std::string config_hash;
    std::vector<std::string> notes; // threshold assumptions, warnings

    std::string to_json(bool with_timestamp = true) const;
    static BiasReport from_json(const std::string& text);
    std::string to_text() const;
};

BiasReport make_report(const SplitOutcome& outcome, const PipelineConfig& cfg,
                       const std::string& config_hash);
BiasReport make_report(const CvOutcome& outcome, const PipelineConfig& cfg,
                       const std::string& config_hash);

struct DeltaEntry {
    std::string feature;
    double ensemble_delta = 0.0;
    double network_delta = 0.0;
    bool agree = false;
};

// Per-feature estimation changes between two reports and whether the two
// methods moved in the same direction (changes inside the dead-zone count
// as zero). Reports must cover the same features under the same convention.
std::vector<DeltaEntry> mitigation_delta(const BiasReport& before, const BiasReport& after,
                                         double deadzone = 0.005);

std::string deltas_to_csv(const std::vector<DeltaEntry>& deltas);

} // namespace biasaudit
