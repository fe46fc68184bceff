#include "biasaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "biasaudit/errors.hpp"

namespace biasaudit {

namespace {

constexpr MetricInfo kMetricTable[kMetricCount] = {
    {"equalized_odds", true, false, false},
    {"disparate_impact", false, false, false},
    {"demographic_parity", false, false, false},
    {"sensitivity", true, false, false},
    {"specificity", true, false, false},
    {"balance_error_rate", true, false, false},
    {"lr_plus", true, false, false},
    {"equal_positive_prediction_value", true, false, false},
    {"equal_negative_prediction_value", true, false, false},
    {"equal_accuracy", true, false, false},
    {"equal_opportunity", true, false, false},
    {"treatment_equality", true, false, false},
    {"equal_false_positive_rate", true, false, false},
    {"equal_false_negative_rate", true, false, false},
    {"error_rate_balance", true, false, false},
    {"normalized_difference", false, false, false},
    {"mutual_information", false, false, false},
    {"balance_residuals", true, false, false},
    {"calibration", false, true, false},
    {"prediction_parity", false, true, true},
    {"error_rate_balance_score", false, true, true},
};

bool truthy(double x) { return x != 0.0; }

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Distinct protected values (ascending) with their row indices.
struct Groups {
    std::vector<double> values;
    std::vector<std::vector<Index>> rows;

    std::size_t size() const { return values.size(); }
};

Groups group_rows(const Vector& fp) {
    Groups g;
    std::map<double, std::vector<Index>> by_value;
    for (Index i = 0; i < fp.size(); ++i) by_value[fp[i]].push_back(i);
    for (auto& [value, rows] : by_value) {
        g.values.push_back(value);
        g.rows.push_back(std::move(rows));
    }
    return g;
}

double population_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size());
}

// Largest population variance attainable by k values confined to [0,1]
// (half at 0, half at 1); used to scale group-rate variances into [0,1].
double max_variance(std::size_t k) {
    if (k < 2) return 1.0;
    const double lo = std::floor(static_cast<double>(k) / 2.0);
    const double hi = std::ceil(static_cast<double>(k) / 2.0);
    return lo * hi / (static_cast<double>(k) * static_cast<double>(k));
}

double scaled_variance(const std::vector<double>& v) {
    return population_variance(v) / max_variance(v.size());
}

struct Spread {
    double value = 0.0;
    MetricFlags flags;
    bool usable = false; // at least two groups had a defined rate
};

std::vector<double> defined_of(const std::vector<std::optional<double>>& rates, bool& had_undefined) {
    std::vector<double> defined;
    had_undefined = false;
    for (const auto& r : rates) {
        if (r) defined.push_back(*r);
        else had_undefined = true;
    }
    return defined;
}

// Subtraction-form metrics: |difference| for the two-group case (the printed
// equations), scaled variance of the per-group rates beyond that. Undefined
// rates (0/0) contribute nothing and set the degenerate flag.
Spread rate_spread(const std::vector<std::optional<double>>& rates) {
    Spread s;
    const auto defined = defined_of(rates, s.flags.degenerate);
    if (defined.size() < 2) {
        s.flags.degenerate = true;
        return s;
    }
    s.usable = true;
    s.value = defined.size() == 2 ? std::abs(defined[0] - defined[1]) : scaled_variance(defined);
    s.value = clamp01(s.value);
    return s;
}

// Variance-form metrics (the printed equations take a variance over the
// protected values); always scaled by the analytic maximum.
Spread variance_spread(const std::vector<std::optional<double>>& rates) {
    Spread s;
    const auto defined = defined_of(rates, s.flags.degenerate);
    if (defined.size() < 2) {
        s.flags.degenerate = true;
        return s;
    }
    s.usable = true;
    s.value = clamp01(scaled_variance(defined));
    return s;
}

// Count-normalized metrics (balance error rate, LR+, treatment equality):
// largest pairwise |difference| of the per-group quantities divided by the
// printed data-size denominator, clamped to [0,1]. Quantities may be
// infinite (a vanished ratio denominator); one infinite against a finite
// saturates the estimation at 1.
Spread normalized_pair_spread(const std::vector<std::optional<double>>& quantities, double denom) {
    Spread s;
    const auto defined = defined_of(quantities, s.flags.degenerate);
    if (defined.size() < 2) {
        s.flags.degenerate = true;
        return s;
    }
    s.usable = true;
    std::size_t infinite = 0;
    for (const double q : defined) {
        if (std::isinf(q)) ++infinite;
    }
    if (infinite == defined.size()) {
        s.flags.degenerate = true;
        return s;
    }
    if (infinite > 0) {
        s.flags.saturated = true;
        s.value = 1.0;
        return s;
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < defined.size(); ++a) {
        for (std::size_t b = a + 1; b < defined.size(); ++b) {
            worst = std::max(worst, std::abs(defined[a] - defined[b]));
        }
    }
    s.value = clamp01(worst / denom);
    return s;
}

std::vector<double> positive_rates(const EvalInput& inp, const Groups& g) {
    std::vector<double> rates(g.size(), 0.0);
    for (std::size_t v = 0; v < g.size(); ++v) {
        double pos = 0.0;
        for (const Index i : g.rows[v]) pos += truthy(inp.predictions[i]) ? 1.0 : 0.0;
        rates[v] = pos / static_cast<double>(g.rows[v].size());
    }
    return rates;
}

MetricEstimate make_estimate(MetricId id, Convention convention, double value, MetricFlags flags) {
    MetricEstimate e;
    e.metric = id;
    e.value = clamp01(value);
    // Fair inputs must score exactly 0; floor the double-precision residue
    // of probability sums that cancel in exact arithmetic.
    if (e.value < 1e-12) e.value = 0.0;
    e.convention = convention;
    e.flags = flags;
    return e;
}

double log2_safe(double x) { return std::log2(x); }

} // namespace

const MetricInfo& metric_info(MetricId id) {
    return kMetricTable[static_cast<int>(id)];
}

std::string metric_name(MetricId id) { return metric_info(id).name; }

std::optional<MetricId> metric_from_name(const std::string& name) {
    for (int i = 0; i < kMetricCount; ++i) {
        if (name == kMetricTable[i].name) return static_cast<MetricId>(i);
    }
    return std::nullopt;
}

std::vector<GroupConfusion> confusion_by_group(const EvalInput& inp) {
    if (!inp.labels) throw ArgumentError("confusion counts require labels");
    const Groups g = group_rows(inp.protected_values);
    std::vector<GroupConfusion> out(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) {
        out[v].value = g.values[v];
        for (const Index i : g.rows[v]) {
            const bool pred = truthy(inp.predictions[i]);
            const bool truth = truthy((*inp.labels)[i]);
            if (pred && truth) ++out[v].tp;
            else if (pred && !truth) ++out[v].fp;
            else if (!pred && !truth) ++out[v].tn;
            else ++out[v].fn;
        }
    }
    return out;
}

namespace {

MetricEstimate estimate_demographic_parity(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    const auto rates = positive_rates(inp, g);
    std::vector<std::optional<double>> opt(rates.begin(), rates.end());
    const Spread s = rate_spread(opt);
    return make_estimate(MetricId::DemographicParity, conv, s.value, s.flags);
}

MetricEstimate estimate_disparate_impact(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    const auto rates = positive_rates(inp, g);
    MetricFlags flags;
    if (g.size() < 2) {
        flags.degenerate = true;
        return make_estimate(MetricId::DisparateImpact, conv, 0.0, flags);
    }
    const double hi = *std::max_element(rates.begin(), rates.end());
    const double lo = *std::min_element(rates.begin(), rates.end());
    if (hi == 0.0) { // nobody receives the positive outcome: the rule holds vacuously
        flags.degenerate = true;
        return make_estimate(MetricId::DisparateImpact, conv, 0.0, flags);
    }
    if (lo == 0.0) { // ratio denominator vanishes: maximal disparity
        flags.saturated = true;
        return make_estimate(MetricId::DisparateImpact, conv, 1.0, flags);
    }
    // min over both ratio orientations makes the 0.8 rule orientation-free.
    const double min_di = lo / hi;
    const double value = min_di > 0.8 ? 0.0 : 1.0 - min_di / 0.8;
    return make_estimate(MetricId::DisparateImpact, conv, value, flags);
}

MetricEstimate estimate_normalized_difference(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    const auto rates = positive_rates(inp, g);
    MetricFlags flags;
    if (g.size() < 2) {
        flags.degenerate = true;
        return make_estimate(MetricId::NormalizedDifference, conv, 0.0, flags);
    }
    const double m = static_cast<double>(inp.predictions.size());
    double p_positive = 0.0;
    for (Index i = 0; i < inp.predictions.size(); ++i) p_positive += truthy(inp.predictions[i]) ? 1.0 : 0.0;
    p_positive /= m;
    const double p_negative = 1.0 - p_positive;

    // max over orientations of |ND|; the denominator bounds the difference
    // by what the outcome and group frequencies admit.
    double worst = 0.0;
    for (std::size_t a = 0; a < g.size(); ++a) {
        for (std::size_t b = 0; b < g.size(); ++b) {
            if (a == b) continue;
            const double pf_a = static_cast<double>(g.rows[a].size()) / m;
            const double pf_b = static_cast<double>(g.rows[b].size()) / m;
            const double denom = std::max(p_positive / pf_b, p_negative / pf_a);
            if (denom <= 0.0) continue;
            worst = std::max(worst, std::abs((rates[a] - rates[b]) / denom));
        }
    }
    return make_estimate(MetricId::NormalizedDifference, conv, worst, flags);
}

MetricEstimate estimate_mutual_information(const EvalInput& inp, Convention conv) {
    const double m = static_cast<double>(inp.predictions.size());
    std::map<std::pair<double, double>, double> joint;
    std::map<double, double> p_pred, p_feat;
    for (Index i = 0; i < inp.predictions.size(); ++i) {
        const double a = truthy(inp.predictions[i]) ? 1.0 : 0.0;
        const double b = inp.protected_values[i];
        joint[{a, b}] += 1.0;
        p_pred[a] += 1.0;
        p_feat[b] += 1.0;
    }
    double h_pred = 0.0, h_feat = 0.0, info = 0.0;
    for (auto& [k, c] : p_pred) {
        const double p = c / m;
        h_pred -= p * log2_safe(p);
    }
    for (auto& [k, c] : p_feat) {
        const double p = c / m;
        h_feat -= p * log2_safe(p);
    }
    MetricFlags flags;
    if (h_pred <= 0.0 || h_feat <= 0.0) {
        // Constant predictions or constant feature: no dependence expressible.
        flags.degenerate = true;
        return make_estimate(MetricId::MutualInformation, conv, 0.0, flags);
    }
    for (auto& [k, c] : joint) {
        const double p = c / m;
        info += p * log2_safe(p / ((p_pred[k.first] / m) * (p_feat[k.second] / m)));
    }
    return make_estimate(MetricId::MutualInformation, conv, std::abs(info) / std::sqrt(h_pred * h_feat), flags);
}

using RateOf = std::optional<double> (*)(const GroupConfusion&);

std::vector<std::optional<double>> rates_from_confusion(const std::vector<GroupConfusion>& conf, RateOf rate) {
    std::vector<std::optional<double>> rates;
    rates.reserve(conf.size());
    for (const auto& c : conf) rates.push_back(rate(c));
    return rates;
}

std::optional<double> tpr_of(const GroupConfusion& c) {
    const double d = static_cast<double>(c.tp + c.fn);
    if (d == 0.0) return std::nullopt;
    return static_cast<double>(c.tp) / d;
}

std::optional<double> tnr_of(const GroupConfusion& c) {
    const double d = static_cast<double>(c.tn + c.fp);
    if (d == 0.0) return std::nullopt;
    return static_cast<double>(c.tn) / d;
}

std::optional<double> fpr_of(const GroupConfusion& c) {
    const double d = static_cast<double>(c.fp + c.tn);
    if (d == 0.0) return std::nullopt;
    return static_cast<double>(c.fp) / d;
}

std::optional<double> fnr_of(const GroupConfusion& c) {
    const double d = static_cast<double>(c.fn + c.tp);
    if (d == 0.0) return std::nullopt;
    return static_cast<double>(c.fn) / d;
}

std::optional<double> ppv_of(const GroupConfusion& c) {
    const double d = static_cast<double>(c.tp + c.fp);
    if (d == 0.0) return std::nullopt;
    return static_cast<double>(c.tp) / d;
}

std::optional<double> npv_of(const GroupConfusion& c) {
    const double d = static_cast<double>(c.tn + c.fn);
    if (d == 0.0) return std::nullopt;
    return static_cast<double>(c.tn) / d;
}

std::optional<double> accuracy_of(const GroupConfusion& c) {
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.size());
}

MetricEstimate from_rate_spread(MetricId id, Convention conv, const std::vector<GroupConfusion>& conf,
                                RateOf rate) {
    const Spread s = rate_spread(rates_from_confusion(conf, rate));
    return make_estimate(id, conv, s.value, s.flags);
}

MetricEstimate estimate_equalized_odds(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    std::set<double> classes;
    for (Index i = 0; i < inp.labels->size(); ++i) classes.insert((*inp.labels)[i]);

    MetricFlags flags;
    double worst = 0.0;
    bool any_usable = false;
    for (const double c : classes) {
        std::vector<std::optional<double>> rates;
        for (std::size_t v = 0; v < g.size(); ++v) {
            double in_class = 0.0, positive = 0.0;
            for (const Index i : g.rows[v]) {
                if ((*inp.labels)[i] == c) {
                    in_class += 1.0;
                    positive += truthy(inp.predictions[i]) ? 1.0 : 0.0;
                }
            }
            rates.push_back(in_class > 0.0 ? std::optional<double>(positive / in_class) : std::nullopt);
        }
        const Spread s = variance_spread(rates);
        flags.degenerate = flags.degenerate || s.flags.degenerate;
        if (s.usable) {
            worst = std::max(worst, s.value);
            any_usable = true;
        }
    }
    if (!any_usable) flags.degenerate = true;
    return make_estimate(MetricId::EqualizedOdds, conv, worst, flags);
}

MetricEstimate estimate_equal_opportunity(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    std::vector<std::optional<double>> rates;
    for (std::size_t v = 0; v < g.size(); ++v) {
        double positives_labeled = 0.0, predicted_positive = 0.0;
        for (const Index i : g.rows[v]) {
            if (truthy((*inp.labels)[i])) {
                positives_labeled += 1.0;
                predicted_positive += truthy(inp.predictions[i]) ? 1.0 : 0.0;
            }
        }
        rates.push_back(positives_labeled > 0.0 ? std::optional<double>(predicted_positive / positives_labeled)
                                                : std::nullopt);
    }
    const Spread s = variance_spread(rates);
    if (!s.usable) return make_estimate(MetricId::EqualOpportunity, conv, 0.0, s.flags);
    const double value = conv == Convention::Corrected ? s.value : 1.0 - s.value;
    return make_estimate(MetricId::EqualOpportunity, conv, value, s.flags);
}

MetricEstimate estimate_balance_residuals(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    std::vector<std::optional<double>> residuals;
    for (std::size_t v = 0; v < g.size(); ++v) {
        double sum = 0.0;
        for (const Index i : g.rows[v]) {
            sum += std::abs((*inp.labels)[i] - (truthy(inp.predictions[i]) ? 1.0 : 0.0));
        }
        residuals.push_back(sum / static_cast<double>(g.rows[v].size()));
    }
    const Spread s = rate_spread(residuals);
    return make_estimate(MetricId::BalanceResiduals, conv, s.value, s.flags);
}

MetricEstimate estimate_error_rate_balance(const EvalInput& inp, Convention conv) {
    const auto conf = confusion_by_group(inp);
    const Spread fnr = rate_spread(rates_from_confusion(conf, fnr_of));
    const Spread fpr = rate_spread(rates_from_confusion(conf, fpr_of));
    MetricFlags flags;
    flags.degenerate = fnr.flags.degenerate || fpr.flags.degenerate;
    std::vector<double> sides;
    if (fnr.usable) sides.push_back(fnr.value);
    if (fpr.usable) sides.push_back(fpr.value);
    if (sides.empty()) {
        flags.degenerate = true;
        return make_estimate(MetricId::ErrorRateBalance, conv, 0.0, flags);
    }
    const double combined = *std::min_element(sides.begin(), sides.end());
    const double value = conv == Convention::Corrected ? combined : 1.0 - combined;
    return make_estimate(MetricId::ErrorRateBalance, conv, value, flags);
}

// Per-(condition, group) positive rates for the score metrics. Returns one
// optional rate per group; empty cells are undefined.
template <typename Member, typename Outcome>
std::vector<std::optional<double>> conditional_rates(const Groups& g, Member member, Outcome outcome) {
    std::vector<std::optional<double>> rates;
    for (std::size_t v = 0; v < g.size(); ++v) {
        double n = 0.0, hits = 0.0;
        for (const Index i : g.rows[v]) {
            if (member(i)) {
                n += 1.0;
                hits += outcome(i) ? 1.0 : 0.0;
            }
        }
        rates.push_back(n > 0.0 ? std::optional<double>(hits / n) : std::nullopt);
    }
    return rates;
}

MetricEstimate estimate_calibration(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    const Vector& scores = *inp.scores;
    const int bins = std::max(1, inp.calibration_bins);
    const double lo = scores.minCoeff();
    const double hi = scores.maxCoeff();
    auto bin_of = [&](Index i) {
        if (hi <= lo) return 0;
        const int b = static_cast<int>(std::floor((scores[i] - lo) / (hi - lo) * bins));
        return std::min(bins - 1, std::max(0, b));
    };

    MetricFlags flags;
    bool usable = false;
    double best = 0.0, worst = 0.0;
    bool first = true;
    for (int b = 0; b < bins; ++b) {
        const auto rates = conditional_rates(
            g, [&](Index i) { return bin_of(i) == b; },
            [&](Index i) { return truthy(inp.predictions[i]); });
        bool had_undefined = false;
        const auto defined = defined_of(rates, had_undefined);
        flags.degenerate = flags.degenerate || had_undefined;
        if (defined.size() < 2) continue;
        const double sv = clamp01(scaled_variance(defined));
        if (first) {
            best = worst = sv;
            first = false;
        } else {
            best = std::min(best, sv);
            worst = std::max(worst, sv);
        }
        usable = true;
    }
    if (!usable) {
        flags.degenerate = true;
        return make_estimate(MetricId::Calibration, conv, 0.0, flags);
    }
    // The printed form takes the least-varying score bin; severity wants the
    // most-varying one.
    const double value = conv == Convention::Corrected ? worst : best;
    return make_estimate(MetricId::Calibration, conv, value, flags);
}

MetricEstimate estimate_prediction_parity(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    const double t = *inp.score_threshold;
    const auto rates = conditional_rates(
        g, [&](Index i) { return (*inp.scores)[i] > t; },
        [&](Index i) { return truthy(inp.predictions[i]); });
    const Spread s = variance_spread(rates);
    if (!s.usable) return make_estimate(MetricId::PredictionParity, conv, 0.0, s.flags);
    const double value = conv == Convention::Corrected ? s.value : 1.0 - s.value;
    return make_estimate(MetricId::PredictionParity, conv, value, s.flags);
}

MetricEstimate estimate_erbs(const EvalInput& inp, Convention conv) {
    const Groups g = group_rows(inp.protected_values);
    const double t = *inp.score_threshold;
    const auto high_given_negative = conditional_rates(
        g, [&](Index i) { return !truthy(inp.predictions[i]); },
        [&](Index i) { return (*inp.scores)[i] > t; });
    const auto low_given_positive = conditional_rates(
        g, [&](Index i) { return truthy(inp.predictions[i]); },
        [&](Index i) { return (*inp.scores)[i] <= t; });

    MetricFlags flags;
    std::vector<double> sides;
    for (const auto* rates : {&high_given_negative, &low_given_positive}) {
        bool had_undefined = false;
        const auto defined = defined_of(*rates, had_undefined);
        flags.degenerate = flags.degenerate || had_undefined;
        if (defined.size() >= 2) sides.push_back(clamp01(scaled_variance(defined)));
    }
    if (sides.empty()) {
        flags.degenerate = true;
        return make_estimate(MetricId::ErrorRateBalanceScore, conv, 0.0, flags);
    }
    const double combined = *std::min_element(sides.begin(), sides.end());
    const double value = conv == Convention::Corrected ? combined : 1.0 - combined;
    return make_estimate(MetricId::ErrorRateBalanceScore, conv, value, flags);
}

} // namespace

MetricEstimate estimate_prediction_metric(MetricId id, const EvalInput& inp, Convention conv) {
    switch (id) {
        case MetricId::DisparateImpact: return estimate_disparate_impact(inp, conv);
        case MetricId::DemographicParity: return estimate_demographic_parity(inp, conv);
        case MetricId::NormalizedDifference: return estimate_normalized_difference(inp, conv);
        case MetricId::MutualInformation: return estimate_mutual_information(inp, conv);
        default:
            throw ArgumentError(metric_name(id) + " is not a prediction-only metric");
    }
}

MetricEstimate estimate_supervised_metric(MetricId id, const EvalInput& inp, Convention conv) {
    if (!metric_info(id).needs_labels) {
        throw ArgumentError(metric_name(id) + " is not a supervised metric");
    }
    if (!inp.labels) throw ArgumentError(metric_name(id) + " requires labels");
    const double m = static_cast<double>(inp.predictions.size());
    switch (id) {
        case MetricId::EqualizedOdds: return estimate_equalized_odds(inp, conv);
        case MetricId::Sensitivity: return from_rate_spread(id, conv, confusion_by_group(inp), tpr_of);
        case MetricId::Specificity: return from_rate_spread(id, conv, confusion_by_group(inp), tnr_of);
        case MetricId::EqualFalsePositiveRate: return from_rate_spread(id, conv, confusion_by_group(inp), fpr_of);
        case MetricId::EqualFalseNegativeRate: return from_rate_spread(id, conv, confusion_by_group(inp), fnr_of);
        case MetricId::EqualPositivePredictionValue: return from_rate_spread(id, conv, confusion_by_group(inp), ppv_of);
        case MetricId::EqualNegativePredictionValue: return from_rate_spread(id, conv, confusion_by_group(inp), npv_of);
        case MetricId::EqualAccuracy: return from_rate_spread(id, conv, confusion_by_group(inp), accuracy_of);
        case MetricId::EqualOpportunity: return estimate_equal_opportunity(inp, conv);
        case MetricId::BalanceResiduals: return estimate_balance_residuals(inp, conv);
        case MetricId::ErrorRateBalance: return estimate_error_rate_balance(inp, conv);
        case MetricId::BalanceErrorRate: {
            const auto conf = confusion_by_group(inp);
            std::vector<std::optional<double>> halves;
            for (const auto& c : conf) halves.push_back(static_cast<double>(c.fp + c.fn) / 2.0);
            const Spread s = normalized_pair_spread(halves, m / 2.0);
            return make_estimate(id, conv, s.value, s.flags);
        }
        case MetricId::LrPlus: {
            const auto conf = confusion_by_group(inp);
            std::vector<std::optional<double>> ratios;
            for (const auto& c : conf) {
                const auto tpr = tpr_of(c);
                if (!tpr) {
                    ratios.push_back(std::nullopt);
                } else if (*tpr >= 1.0) {
                    ratios.push_back(std::numeric_limits<double>::infinity());
                } else {
                    ratios.push_back(*tpr / (1.0 - *tpr));
                }
            }
            const Spread s = normalized_pair_spread(ratios, m / 2.0);
            return make_estimate(id, conv, s.value, s.flags);
        }
        case MetricId::TreatmentEquality: {
            const auto conf = confusion_by_group(inp);
            std::vector<std::optional<double>> ratios;
            for (const auto& c : conf) {
                if (c.fp == 0 && c.fn == 0) ratios.push_back(std::nullopt);
                else if (c.fp == 0) ratios.push_back(std::numeric_limits<double>::infinity());
                else ratios.push_back(static_cast<double>(c.fn) / static_cast<double>(c.fp));
            }
            const Spread s = normalized_pair_spread(ratios, m);
            return make_estimate(id, conv, s.value, s.flags);
        }
        default:
            throw ArgumentError(metric_name(id) + " is not handled by the supervised evaluator");
    }
}

MetricEstimate estimate_score_metric(MetricId id, const EvalInput& inp, Convention conv) {
    if (!metric_info(id).needs_scores) {
        throw ArgumentError(metric_name(id) + " is not a score metric");
    }
    if (!inp.scores) throw ArgumentError(metric_name(id) + " requires risk scores");
    if (metric_info(id).needs_threshold && !inp.score_threshold) {
        throw ArgumentError(metric_name(id) + " requires a score threshold");
    }
    switch (id) {
        case MetricId::Calibration: return estimate_calibration(inp, conv);
        case MetricId::PredictionParity: return estimate_prediction_parity(inp, conv);
        case MetricId::ErrorRateBalanceScore: return estimate_erbs(inp, conv);
        default:
            throw ArgumentError(metric_name(id) + " is not handled by the score evaluator");
    }
}

MetricEstimate estimate_metric(MetricId id, const EvalInput& inp, Convention conv) {
    const MetricInfo& info = metric_info(id);
    if (info.needs_scores) return estimate_score_metric(id, inp, conv);
    if (info.needs_labels) return estimate_supervised_metric(id, inp, conv);
    return estimate_prediction_metric(id, inp, conv);
}

EstimateAllResult estimate_all_with_predictions(const Dataset& ds, const Vector& soft_outcomes,
                                                const std::string& feature, Convention convention,
                                                const MetricOptions& options) {
    if (!ds.schema.is_protected(feature)) {
        throw ArgumentError("feature '" + feature + "' is not in the protected set");
    }
    if (soft_outcomes.size() != ds.row_count()) {
        throw ArgumentError("prediction vector length does not match dataset");
    }

    EvalInput inp;
    inp.predictions = soft_outcomes.unaryExpr(
        [t = options.prediction_threshold](double v) { return v > t ? 1.0 : 0.0; });
    inp.protected_values = ds.column(feature);
    inp.labels = ds.labels;
    inp.scores = ds.scores;
    inp.score_threshold = options.score_threshold;
    inp.calibration_bins = options.calibration_bins;

    EstimateAllResult out;
    for (int i = 0; i < kMetricCount; ++i) {
        const auto id = static_cast<MetricId>(i);
        const MetricInfo& info = metric_info(id);
        const bool available = (!info.needs_labels || inp.labels.has_value()) &&
                               (!info.needs_scores || inp.scores.has_value()) &&
                               (!info.needs_threshold || inp.score_threshold.has_value());
        if (!available) {
            out.unavailable.push_back(id);
            continue;
        }
        MetricEstimate e = estimate_metric(id, inp, convention);
        e.feature = feature;
        out.estimates.push_back(std::move(e));
    }
    return out;
}

EstimateAllResult estimate_all(const Dataset& ds, const Predictor& predictor, const std::string& feature,
                               Convention convention, const MetricOptions& options) {
    return estimate_all_with_predictions(ds, predictor.predict_batch(ds.rows), feature, convention,
                                         options);
}

std::string metrics_to_json(const std::vector<MetricEstimate>& estimates) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : estimates) {
        nlohmann::json flags = nlohmann::json::array();
        if (e.flags.degenerate) flags.push_back("degenerate");
        if (e.flags.saturated) flags.push_back("saturated");
        arr.push_back({{"metric", metric_name(e.metric)},
                       {"feature", e.feature},
                       {"value", e.value},
                       {"convention", e.convention == Convention::Corrected ? "corrected" : "verbatim"},
                       {"flags", flags}});
    }
    return arr.dump(2);
}

std::string metrics_to_csv(const std::map<std::string, EstimateAllResult>& per_feature) {
    std::ostringstream os;
    os.precision(17);
    os << "metric";
    for (const auto& [feature, result] : per_feature) os << "," << feature;
    os << "\n";
    for (int i = 0; i < kMetricCount; ++i) {
        const auto id = static_cast<MetricId>(i);
        os << metric_name(id);
        for (const auto& [feature, result] : per_feature) {
            os << ",";
            for (const auto& e : result.estimates) {
                if (e.metric == id) {
                    os << e.value;
                    break;
                }
            }
        }
        os << "\n";
    }
    return os.str();
}

} // namespace biasaudit
