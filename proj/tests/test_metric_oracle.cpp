// Exhaustive agreement between the implementation and the independent
// brute-force oracle on every binary input with m <= 8 samples. Inputs are
// enumerated as count vectors over the distinct sample types (the metrics
// are permutation-invariant, which test_metrics checks separately), so the
// whole space is covered without materializing duplicate orderings.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/oracle_harness.hpp"

TEST_CASE("supervised and prediction metrics match the oracle exhaustively") {
    const auto stats = oracle_harness::compare_supervised(8);
    CHECK(stats.inputs == 12869); // sum over m<=8 of C(m+7,7)
    CAPTURE(stats.worst_label);
    CHECK(stats.worst <= 1e-12);
    MESSAGE("comparisons: ", stats.comparisons, ", worst |error|: ", stats.worst);
}

TEST_CASE("score metrics match the oracle exhaustively on a 3-point grid") {
    const auto stats = oracle_harness::compare_score(8);
    CHECK(stats.inputs == 125969); // sum over m<=8 of C(m+11,11)
    CAPTURE(stats.worst_label);
    CHECK(stats.worst <= 1e-12);
    MESSAGE("comparisons: ", stats.comparisons, ", worst |error|: ", stats.worst);
}
