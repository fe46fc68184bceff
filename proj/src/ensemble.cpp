#include "biasaudit/ensemble.hpp"

#include "biasaudit/errors.hpp"

namespace biasaudit {

EnsembleEntry aggregate(const EstimateAllResult& estimates, const std::string& feature) {
    EnsembleEntry entry;
    entry.feature = feature;
    entry.unavailable_count = static_cast<int>(estimates.unavailable.size());

    bool any = false;
    for (const MetricEstimate& e : estimates.estimates) {
        if (e.feature != feature) continue;
        if (e.flags.degenerate) ++entry.degenerate_count;
        if (!any || e.value > entry.value) {
            entry.value = e.value;
            entry.argmax = e.metric;
            any = true;
        }
        entry.estimates.push_back(e);
    }
    if (!any) {
        throw AuditError("no available estimation for feature '" + feature + "'");
    }
    return entry;
}

} // namespace biasaudit
