#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "biasaudit/dataset.hpp"
#include "biasaudit/errors.hpp"
#include "biasaudit/metrics.hpp"
#include "biasaudit/rng.hpp"
#include "support/fixtures.hpp"

using namespace biasaudit;
using fixtures::eval_input;

TEST_CASE("confusion counts per group") {
    SUBCASE("two singleton groups") {
        const auto conf = confusion_by_group(eval_input({1, 0}, {1, 0}, {1, 0}));
        REQUIRE(conf.size() == 2);
        CHECK(conf[1].value == 1.0);
        CHECK(conf[1].tp == 1);
        CHECK(conf[0].tn == 1);
    }
    SUBCASE("hand-counted four rows") {
        const auto conf = confusion_by_group(eval_input({1, 1, 0, 0}, {1, 1, 0, 0}, {1, 0, 1, 0}));
        REQUIRE(conf.size() == 2);
        CHECK(conf[1].tp == 1);
        CHECK(conf[1].fp == 1);
        CHECK(conf[0].fn == 1);
        CHECK(conf[0].tn == 1);
    }
    SUBCASE("single group totals m") {
        const auto conf = confusion_by_group(eval_input({1, 0, 1}, {2, 2, 2}, {1, 1, 0}));
        REQUIRE(conf.size() == 1);
        CHECK(conf[0].size() == 3);
    }
    SUBCASE("labels required") {
        CHECK_THROWS_AS(confusion_by_group(eval_input({1, 0}, {1, 0})), ArgumentError);
    }
}

TEST_CASE("demographic parity direct example") {
    const auto in = eval_input({1, 1, 0, 0, 1, 0, 0, 0}, {1, 1, 1, 1, 0, 0, 0, 0});
    const auto e = estimate_prediction_metric(MetricId::DemographicParity, in);
    CHECK(e.value == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("disparate impact examples") {
    // rates 0.4 vs 0.8: min ratio 0.5 <= 0.8 -> 1 - 0.5/0.8
    std::vector<double> pred, fp;
    for (int i = 0; i < 5; ++i) {
        pred.push_back(i < 2 ? 1 : 0);
        fp.push_back(1);
    }
    for (int i = 0; i < 5; ++i) {
        pred.push_back(i < 4 ? 1 : 0);
        fp.push_back(0);
    }
    const auto e = estimate_prediction_metric(MetricId::DisparateImpact, eval_input(pred, fp));
    CHECK(e.value == doctest::Approx(0.375).epsilon(1e-12));

    // zero positive rate on one side saturates
    const auto sat = estimate_prediction_metric(MetricId::DisparateImpact,
                                                eval_input({1, 1, 0, 0}, {1, 1, 0, 0}));
    CHECK(sat.value == 1.0);
    CHECK(sat.flags.saturated);
}

TEST_CASE("mutual information saturates and vanishes") {
    const auto maxed = estimate_prediction_metric(MetricId::MutualInformation,
                                                  eval_input({1, 1, 0, 0}, {1, 1, 0, 0}));
    CHECK(maxed.value == doctest::Approx(1.0).epsilon(1e-12));

    const auto none = estimate_prediction_metric(MetricId::MutualInformation,
                                                 eval_input({1, 0, 1, 0}, {1, 1, 0, 0}));
    CHECK(none.value == doctest::Approx(0.0).epsilon(1e-12));

    const auto constant = estimate_prediction_metric(MetricId::MutualInformation,
                                                     eval_input({1, 1, 1, 1}, {1, 1, 0, 0}));
    CHECK(constant.value == 0.0);
    CHECK(constant.flags.degenerate);
}

TEST_CASE("sensitivity direct example") {
    // TPR(fp=1) = 1.0 (2/2), TPR(fp=0) = 0.5 (1/2)
    const auto e = estimate_supervised_metric(
        MetricId::Sensitivity,
        eval_input({1, 1, 1, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}));
    CHECK(e.value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("equal accuracy zero when group accuracies match") {
    const auto e = estimate_supervised_metric(
        MetricId::EqualAccuracy,
        eval_input({1, 0, 1, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}));
    // both groups 50% accurate
    CHECK(e.value == 0.0);
}

TEST_CASE("balance residuals hand example") {
    // group 1 residual mean 1.0, group 0 residual mean 0.0
    const auto e = estimate_supervised_metric(
        MetricId::BalanceResiduals,
        eval_input({0, 0, 1, 0}, {1, 1, 0, 0}, {1, 1, 1, 0}));
    CHECK(e.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("error rate balance is 0 for fully fair inputs under corrected") {
    const auto e = estimate_supervised_metric(
        MetricId::ErrorRateBalance,
        eval_input({1, 0, 1, 0}, {1, 1, 0, 0}, {1, 0, 1, 0}));
    CHECK(e.value == 0.0);
    // verbatim keeps the printed inversion
    const auto v = estimate_supervised_metric(
        MetricId::ErrorRateBalance,
        eval_input({1, 0, 1, 0}, {1, 1, 0, 0}, {1, 0, 1, 0}), Convention::Verbatim);
    CHECK(v.value == 1.0);
}

TEST_CASE("LR+ and treatment equality degenerate on perfect classifiers") {
    // perfect predictions: TPR = 1 in both groups, no errors at all
    const auto in = eval_input({1, 0, 1, 0}, {1, 1, 0, 0}, {1, 0, 1, 0});
    const auto lr = estimate_supervised_metric(MetricId::LrPlus, in);
    CHECK(lr.value == 0.0);
    CHECK(lr.flags.degenerate);
    const auto te = estimate_supervised_metric(MetricId::TreatmentEquality, in);
    CHECK(te.value == 0.0);
    CHECK(te.flags.degenerate);
}

TEST_CASE("LR+ saturates when only one group has a perfect TPR") {
    // group 1: TPR 1 (inf ratio), group 0: TPR 0.5
    const auto e = estimate_supervised_metric(
        MetricId::LrPlus, eval_input({1, 1, 1, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}));
    CHECK(e.value == 1.0);
    CHECK(e.flags.saturated);
}

TEST_CASE("prediction parity and ERBS corrected examples") {
    EvalInput in = eval_input({1, 0, 1, 0}, {1, 1, 0, 0});
    std::vector<double> scores{0.9, 0.2, 0.9, 0.2};
    in.scores = Eigen::Map<const Vector>(scores.data(), 4);
    in.score_threshold = 0.5;

    // P(M=1 | s>t) identical (=1) across groups
    const auto pp = estimate_score_metric(MetricId::PredictionParity, in);
    CHECK(pp.value == 0.0);

    const auto erbs = estimate_score_metric(MetricId::ErrorRateBalanceScore, in);
    CHECK(erbs.value == 0.0);

    in.score_threshold.reset();
    CHECK_THROWS_AS(estimate_score_metric(MetricId::PredictionParity, in), ArgumentError);
}

TEST_CASE("calibration measures per-bin group rate variance") {
    // Two score clusters (bins); group rates differ by 0.4 in each.
    std::vector<double> pred, fp, scores;
    auto add = [&](double score, double group, int positives, int total) {
        for (int i = 0; i < total; ++i) {
            pred.push_back(i < positives ? 1 : 0);
            fp.push_back(group);
            scores.push_back(score);
        }
    };
    add(0.0, 1, 4, 5); // rate 0.8
    add(0.0, 0, 2, 5); // rate 0.4
    add(1.0, 1, 3, 5); // rate 0.6
    add(1.0, 0, 1, 5); // rate 0.2
    EvalInput in = eval_input(pred, fp);
    in.scores = Eigen::Map<const Vector>(scores.data(), static_cast<Index>(scores.size()));

    const auto e = estimate_score_metric(MetricId::Calibration, in);
    // scaled two-group variance of a 0.4 gap is (0.4)^2
    CHECK(e.value == doctest::Approx(0.16).epsilon(1e-12));
}

TEST_CASE("estimate_all on synthetic data under the label oracle") {
    const Dataset ds = generate_synthetic(305, 7);
    SUBCASE("fair feature: every applicable metric is exactly 0") {
        const auto result = estimate_all_with_predictions(ds, *ds.labels, "fair");
        REQUIRE(!result.estimates.empty());
        for (const auto& e : result.estimates) {
            CHECK(e.value == 0.0);
        }
    }
    SUBCASE("biased feature: demographic parity saturates at 1") {
        const auto result = estimate_all_with_predictions(ds, *ds.labels, "biased");
        bool found = false;
        for (const auto& e : result.estimates) {
            if (e.metric == MetricId::DemographicParity) {
                CHECK(e.value == 1.0);
                found = true;
            }
        }
        CHECK(found);
    }
    SUBCASE("unprotected feature is rejected") {
        CHECK_THROWS_AS(estimate_all_with_predictions(ds, *ds.labels, "random"), ArgumentError);
    }
}

TEST_CASE("estimate_all availability accounting") {
    Dataset ds = generate_synthetic(64, 3);

    SUBCASE("labels but no scores: 18 metrics") {
        const auto r = estimate_all_with_predictions(ds, *ds.labels, "fair");
        CHECK(r.estimates.size() == 18);
        CHECK(r.unavailable.size() == 3);
    }
    SUBCASE("no labels, scores and threshold present: exactly the 7 label-free metrics") {
        Vector preds = *ds.labels;
        ds.scores = ds.column("random");
        ds.labels.reset();
        MetricOptions opts;
        opts.score_threshold = 0.5;
        const auto r = estimate_all_with_predictions(ds, preds, "fair", Convention::Corrected, opts);
        CHECK(r.estimates.size() == 7);
        CHECK(r.unavailable.size() == 14);
        for (const auto& e : r.estimates) {
            CHECK(!metric_info(e.metric).needs_labels);
        }
    }
    SUBCASE("nothing but predictions: the 4 prediction metrics") {
        Vector preds = *ds.labels;
        ds.labels.reset();
        const auto r = estimate_all_with_predictions(ds, preds, "fair");
        CHECK(r.estimates.size() == 4);
    }
}

// Property: every estimation stays in [0,1]; protected encoding swaps and
// sample permutations change nothing.
TEST_CASE("metric properties on fuzzed inputs") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const int m = 2 + static_cast<int>(rng.below(10));
        std::vector<double> pred(m), fp(m), labels(m), scores(m);
        for (int i = 0; i < m; ++i) {
            pred[i] = rng.coin();
            fp[i] = rng.coin();
            labels[i] = rng.coin();
            scores[i] = rng.uniform();
        }
        EvalInput in = eval_input(pred, fp, labels);
        in.scores = Eigen::Map<const Vector>(scores.data(), m);
        in.score_threshold = 0.5;

        EvalInput swapped = in;
        swapped.protected_values = in.protected_values.unaryExpr([](double v) { return 1.0 - v; });

        std::vector<Index> perm(static_cast<std::size_t>(m));
        std::iota(perm.begin(), perm.end(), Index{0});
        rng.shuffle(perm);
        EvalInput permuted = in;
        for (int i = 0; i < m; ++i) {
            permuted.predictions[i] = in.predictions[perm[static_cast<std::size_t>(i)]];
            permuted.protected_values[i] = in.protected_values[perm[static_cast<std::size_t>(i)]];
            (*permuted.labels)[i] = (*in.labels)[perm[static_cast<std::size_t>(i)]];
            (*permuted.scores)[i] = (*in.scores)[perm[static_cast<std::size_t>(i)]];
        }

        for (int id = 0; id < kMetricCount; ++id) {
            const auto metric = static_cast<MetricId>(id);
            for (const auto conv : {Convention::Corrected, Convention::Verbatim}) {
                const double base = estimate_metric(metric, in, conv).value;
                CHECK(base >= 0.0);
                CHECK(base <= 1.0);
                CHECK(estimate_metric(metric, swapped, conv).value == doctest::Approx(base).epsilon(1e-12));
                CHECK(estimate_metric(metric, permuted, conv).value == doctest::Approx(base).epsilon(1e-12));
            }
        }
    }
}

// Property: group-identical behavior means every corrected estimation is 0.
TEST_CASE("zero at fair under the corrected convention") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const int half = 2 + static_cast<int>(rng.below(6));
        std::vector<double> pred, fp, labels, scores;
        for (int i = 0; i < half; ++i) {
            const double p = rng.coin(), y = rng.coin(), s = 0.25 + 0.5 * rng.coin();
            // mirror the same sample into both groups
            for (double g : {1.0, 0.0}) {
                pred.push_back(p);
                fp.push_back(g);
                labels.push_back(y);
                scores.push_back(s);
            }
        }
        EvalInput in = eval_input(pred, fp, labels);
        in.scores = Eigen::Map<const Vector>(scores.data(), static_cast<Index>(scores.size()));
        in.score_threshold = 0.5;
        for (int id = 0; id < kMetricCount; ++id) {
            CHECK(estimate_metric(static_cast<MetricId>(id), in).value == 0.0);
        }
    }
}

TEST_CASE("multi-valued protected features use the scaled variance") {
    // three groups with positive rates 1, 0, 0.5 -> popvar/maxvar
    const auto in = eval_input({1, 1, 0, 0, 1, 0}, {0, 0, 1, 1, 2, 2});
    const auto e = estimate_prediction_metric(MetricId::DemographicParity, in);
    const double mean = 0.5;
    const double popvar = ((1 - mean) * (1 - mean) + (0 - mean) * (0 - mean) + 0.0) / 3.0;
    const double maxvar = 2.0 / 9.0; // floor(3/2)*ceil(3/2)/9
    CHECK(e.value == doctest::Approx(popvar / maxvar).epsilon(1e-12));
}

TEST_CASE("metric estimates serialize to the documented JSON shape") {
    const Dataset ds = generate_synthetic(32, 9);
    const auto result = estimate_all_with_predictions(ds, *ds.labels, "biased");
    const std::string json = metrics_to_json(result.estimates);
    CHECK(json.find("\"metric\"") != std::string::npos);
    CHECK(json.find("\"feature\": \"biased\"") != std::string::npos);
    CHECK(json.find("\"convention\": \"corrected\"") != std::string::npos);
    CHECK(json.find("\"flags\"") != std::string::npos);

    std::map<std::string, EstimateAllResult> per_feature{{"biased", result}};
    const std::string csv = metrics_to_csv(per_feature);
    CHECK(csv.rfind("metric,biased\n", 0) == 0);
    CHECK(csv.find("demographic_parity,1") != std::string::npos);
}

TEST_CASE("metric names round trip") {
    for (int id = 0; id < kMetricCount; ++id) {
        const auto metric = static_cast<MetricId>(id);
        const auto back = metric_from_name(metric_name(metric));
        REQUIRE(back.has_value());
        CHECK(*back == metric);
    }
    CHECK(!metric_from_name("nope").has_value());
}
