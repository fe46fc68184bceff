#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "biasaudit/dataset.hpp"
#include "biasaudit/ensemble.hpp"
#include "biasaudit/errors.hpp"
#include "biasaudit/rng.hpp"

using namespace biasaudit;

namespace {

EstimateAllResult result_with(const std::vector<double>& values) {
    EstimateAllResult r;
    for (std::size_t i = 0; i < values.size(); ++i) {
        MetricEstimate e;
        e.metric = static_cast<MetricId>(i);
        e.feature = "f";
        e.value = values[i];
        r.estimates.push_back(e);
    }
    return r;
}

} // namespace

TEST_CASE("aggregate takes the maximum with provenance") {
    const auto entry = aggregate(result_with({0.1, 0.4, 0.25}), "f");
    CHECK(entry.value == 0.4);
    CHECK(entry.argmax == static_cast<MetricId>(1));
    CHECK(entry.estimates.size() == 3);
}

TEST_CASE("ties resolve to the lowest metric id") {
    const auto entry = aggregate(result_with({0.4, 0.4, 0.1}), "f");
    CHECK(entry.argmax == static_cast<MetricId>(0));
}

TEST_CASE("unavailable metrics are counted, not zero-filled") {
    EstimateAllResult r = result_with({0.3});
    r.unavailable = {MetricId::Calibration, MetricId::PredictionParity};
    const auto entry = aggregate(r, "f");
    CHECK(entry.value == 0.3);
    CHECK(entry.unavailable_count == 2);
}

TEST_CASE("aggregation with no estimates is an error") {
    EstimateAllResult empty;
    CHECK_THROWS_AS(aggregate(empty, "f"), AuditError);
}

TEST_CASE("synthetic extremes under the label oracle") {
    const Dataset ds = generate_synthetic(305, 7);
    const auto fair = aggregate(estimate_all_with_predictions(ds, *ds.labels, "fair"), "fair");
    CHECK(fair.value == 0.0);
    const auto biased = aggregate(estimate_all_with_predictions(ds, *ds.labels, "biased"), "biased");
    CHECK(biased.value == 1.0);
}

// max-properties: dominates members, permutation-invariant, monotone under
// adding estimates.
TEST_CASE("aggregate properties") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(10));
        std::vector<double> values(static_cast<std::size_t>(n));
        for (auto& v : values) v = rng.uniform();

        const auto entry = aggregate(result_with(values), "f");
        for (double v : values) CHECK(entry.value >= v);

        std::vector<double> shuffled = values;
        rng.shuffle(shuffled);
        // permutation changes metric ids, not the max value
        CHECK(aggregate(result_with(shuffled), "f").value == entry.value);

        std::vector<double> extended = values;
        extended.push_back(rng.uniform());
        CHECK(aggregate(result_with(extended), "f").value >= entry.value);
    }
}
