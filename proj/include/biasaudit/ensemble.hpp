#pragma once

#include <string>
#include <vector>

#include "biasaudit/metrics.hpp"

namespace biasaudit {

// Ensemble verdict for one protected feature: the most severe (maximum)
// scaled estimation across the available metrics, with provenance.
struct EnsembleEntry {
    std::string feature;
    double value = 0.0;
    MetricId argmax{};                      // lowest MetricId on ties
    std::vector<MetricEstimate> estimates;  // the full vector that was aggregated
    int unavailable_count = 0;
    int degenerate_count = 0;
};

// Throws AuditError when no estimation is available for the feature.
// Metrics skipped for missing inputs are excluded rather than counted as 0,
// so an unsupervised audit is not dragged toward fairness by inapplicable
// supervised metrics.
EnsembleEntry aggregate(const EstimateAllResult& estimates, const std::string& feature);

} // namespace biasaudit
