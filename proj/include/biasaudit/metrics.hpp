#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biasaudit/dataset.hpp"
#include "biasaudit/model.hpp"
#include "biasaudit/types.hpp"

namespace biasaudit {

// The 21 scaled bias estimations, in fixed report order.
enum class MetricId {
    EqualizedOdds = 0,
    DisparateImpact,
    DemographicParity,
    Sensitivity,
    Specificity,
    BalanceErrorRate,
    LrPlus,
    EqualPositivePredictionValue,
    EqualNegativePredictionValue,
    EqualAccuracy,
    EqualOpportunity,
    TreatmentEquality,
    EqualFalsePositiveRate,
    EqualFalseNegativeRate,
    ErrorRateBalance,
    NormalizedDifference,
    MutualInformation,
    BalanceResiduals,
    Calibration,
    PredictionParity,
    ErrorRateBalanceScore,
};

inline constexpr int kMetricCount = 21;

// Two published forms exist for a handful of metrics: the printed equations
// invert some variance terms ("1 - ...", or take a min where severity wants
// a max), which makes a perfectly fair input score ~1. `Corrected` repairs
// those so that 0 always means fair; `Verbatim` keeps the printed forms.
enum class Convention { Corrected, Verbatim };

struct MetricInfo {
    const char* name;
    bool needs_labels;
    bool needs_scores;
    bool needs_threshold;
};

const MetricInfo& metric_info(MetricId id);
std::string metric_name(MetricId id);
std::optional<MetricId> metric_from_name(const std::string& name);

// Everything a metric can consume. Predictions must already be thresholded
// to {0,1}; all vectors share length m.
struct EvalInput {
    Vector predictions;
    Vector protected_values;
    std::optional<Vector> labels; // {0,1}
    std::optional<Vector> scores;
    std::optional<double> score_threshold;
    int calibration_bins = 10;
};

// Per-group confusion counts; group keys are the distinct protected values.
struct GroupConfusion {
    double value = 0.0; // protected value identifying the group
    Index tp = 0, fp = 0, tn = 0, fn = 0;
    Index size() const { return tp + fp + tn + fn; }
};

std::vector<GroupConfusion> confusion_by_group(const EvalInput& inp);

struct MetricFlags {
    bool degenerate = false; // an undefined rate (0/0 or empty conditional) was skipped
    bool saturated = false;  // a ratio denominator vanished; estimation forced to 1

    bool any() const { return degenerate || saturated; }
};

struct MetricEstimate {
    MetricId metric{};
    std::string feature;
    double value = 0.0; // in [0,1]; 0 = fair under Corrected
    Convention convention = Convention::Corrected;
    MetricFlags flags;
};

// Single-metric evaluators, split by required inputs. Each checks that the
// given id belongs to its family and that the inputs it needs are present.
MetricEstimate estimate_prediction_metric(MetricId id, const EvalInput& inp,
                                          Convention convention = Convention::Corrected);
MetricEstimate estimate_supervised_metric(MetricId id, const EvalInput& inp,
                                          Convention convention = Convention::Corrected);
MetricEstimate estimate_score_metric(MetricId id, const EvalInput& inp,
                                     Convention convention = Convention::Corrected);

// Dispatches to the family evaluator for the id.
MetricEstimate estimate_metric(MetricId id, const EvalInput& inp,
                               Convention convention = Convention::Corrected);

struct MetricOptions {
    double prediction_threshold = 0.5; // soft outcome > threshold counts as positive
    int calibration_bins = 10;
    std::optional<double> score_threshold;
};

struct EstimateAllResult {
    std::vector<MetricEstimate> estimates;   // ordered by MetricId
    std::vector<MetricId> unavailable;       // skipped for missing inputs
};

// Runs every metric whose inputs are available against the predictor's
// thresholded outcomes for one protected feature.
EstimateAllResult estimate_all(const Dataset& ds, const Predictor& predictor,
                               const std::string& feature,
                               Convention convention = Convention::Corrected,
                               const MetricOptions& options = {});

// Same, with predictions already computed (avoids re-querying per feature).
EstimateAllResult estimate_all_with_predictions(const Dataset& ds, const Vector& soft_outcomes,
                                                const std::string& feature,
                                                Convention convention = Convention::Corrected,
                                                const MetricOptions& options = {});

// JSON array of {metric, feature, value, convention, flags}.
std::string metrics_to_json(const std::vector<MetricEstimate>& estimates);

// CSV table with features as columns and metrics as rows.
std::string metrics_to_csv(const std::map<std::string, EstimateAllResult>& per_feature);

} // namespace biasaudit
