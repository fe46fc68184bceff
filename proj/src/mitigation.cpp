#include "biasaudit/mitigation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "biasaudit/errors.hpp"

namespace biasaudit {

namespace {

struct GroupTally {
    double weight_sum = 0.0;
    double positive_weight_sum = 0.0;

    double rate() const { return weight_sum > 0.0 ? positive_weight_sum / weight_sum : 0.0; }
};

double variance_of(const std::map<double, GroupTally>& groups) {
    if (groups.size() < 2) return 0.0;
    double mean = 0.0;
    for (const auto& [value, tally] : groups) mean += tally.rate();
    mean /= static_cast<double>(groups.size());
    double var = 0.0;
    for (const auto& [value, tally] : groups) {
        const double d = tally.rate() - mean;
        var += d * d;
    }
    return var / static_cast<double>(groups.size());
}

std::map<double, GroupTally> tally_groups(const Dataset& ds, Index feature) {
    std::map<double, GroupTally> groups;
    for (Index i = 0; i < ds.row_count(); ++i) {
        GroupTally& t = groups[ds.rows(i, feature)];
        t.weight_sum += ds.weights[i];
        t.positive_weight_sum += ds.weights[i] * (*ds.labels)[i];
    }
    return groups;
}

} // namespace

double group_positive_variance(const Dataset& ds, const std::string& feature) {
    if (!ds.labels) throw ArgumentError("group positive variance requires labels");
    return variance_of(tally_groups(ds, ds.schema.column_index(feature)));
}

std::string MitigationLog::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "iteration,group,row_index,weight,variance\n";
    for (const MitigationStep& s : steps) {
        os << s.iteration << "," << s.group << "," << s.row_index << "," << s.weight << ","
           << s.variance << "\n";
    }
    return os.str();
}

std::pair<Dataset, MitigationLog> reweight(const Dataset& ds, const std::string& feature,
                                           const MitigationConfig& cfg) {
    if (!ds.labels) throw ArgumentError("re-weighting requires labels");
    if (cfg.variance_threshold <= 0.0) throw ArgumentError("variance threshold must be positive");
    const Index col = ds.schema.column_index(feature);

    Dataset out = ds;
    MitigationLog log;
    std::map<double, GroupTally> groups = tally_groups(out, col);
    log.initial_variance = variance_of(groups);

    // First positive / first negative row per group; replicas always copy an
    // original row, so these never change.
    std::map<double, Index> first_positive, first_negative;
    for (Index i = 0; i < ds.row_count(); ++i) {
        const double g = ds.rows(i, col);
        if ((*ds.labels)[i] != 0.0) {
            first_positive.emplace(g, i);
        } else {
            first_negative.emplace(g, i);
        }
    }

    std::vector<Eigen::RowVectorXd> extra_rows;
    std::vector<double> extra_labels, extra_weights, extra_scores;

    auto append_replica = [&](Index row, double weight) {
        extra_rows.push_back(ds.rows.row(row));
        extra_labels.push_back((*ds.labels)[row]);
        extra_weights.push_back(weight);
        if (ds.scores) extra_scores.push_back((*ds.scores)[row]);
        GroupTally& t = groups[ds.rows(row, col)];
        t.weight_sum += weight;
        t.positive_weight_sum += weight * (*ds.labels)[row];
    };

    double variance = log.initial_variance;
    long round = 0;
    constexpr double kDecrease = 1e-15;
    while (variance > cfg.variance_threshold && round < cfg.max_iterations) {
        ++round;
        double mean_rate = 0.0;
        for (const auto& [value, tally] : groups) mean_rate += tally.rate();
        mean_rate /= static_cast<double>(groups.size());

        bool progressed = false;
        std::vector<std::string> blocked;
        for (const auto& [value, tally] : groups) {
            const double rate = tally.rate();
            if (rate == mean_rate) continue;
            const bool below = rate < mean_rate;
            const auto& pool = below ? first_positive : first_negative;
            const auto it = pool.find(value);
            if (it == pool.end()) {
                blocked.push_back("group " + std::to_string(value) + " has no " +
                                  (below ? "positive" : "negative") + "-labeled sample");
                continue;
            }
            const Index row = it->second;
            const double label = (*ds.labels)[row];
            double chosen = 0.0;
            for (const double w : {cfg.positive_contribution_weight, cfg.other_weight}) {
                if (w <= 0.0) continue;
                GroupTally trial = tally;
                trial.weight_sum += w;
                trial.positive_weight_sum += w * label;
                std::map<double, GroupTally> trial_groups = groups;
                trial_groups[value] = trial;
                if (variance_of(trial_groups) < variance - kDecrease) {
                    chosen = w;
                    break;
                }
            }
            if (chosen == 0.0) continue;
            append_replica(row, chosen);
            variance = variance_of(groups);
            log.steps.push_back({round, value, row, chosen, variance});
            progressed = true;
            if (variance <= cfg.variance_threshold) break;
        }

        if (!progressed) {
            std::string detail = blocked.empty() ? "no replica decreases the variance"
                                                 : blocked.front();
            for (std::size_t i = 1; i < blocked.size(); ++i) detail += "; " + blocked[i];
            throw MitigationError("re-weighting stalled at variance " + std::to_string(variance) +
                                  " (threshold " + std::to_string(cfg.variance_threshold) + "): " +
                                  detail);
        }
    }

    log.final_variance = variance;
    log.reached_threshold = variance <= cfg.variance_threshold;
    log.hit_iteration_cap = !log.reached_threshold;

    if (!extra_rows.empty()) {
        const Index m0 = ds.row_count();
        const Index extra = static_cast<Index>(extra_rows.size());
        out.rows.conservativeResize(m0 + extra, Eigen::NoChange);
        out.weights.conservativeResize(m0 + extra);
        out.labels->conservativeResize(m0 + extra);
        if (out.scores) out.scores->conservativeResize(m0 + extra);
        for (Index i = 0; i < extra; ++i) {
            out.rows.row(m0 + i) = extra_rows[static_cast<std::size_t>(i)];
            out.weights[m0 + i] = extra_weights[static_cast<std::size_t>(i)];
            (*out.labels)[m0 + i] = extra_labels[static_cast<std::size_t>(i)];
            if (out.scores) (*out.scores)[m0 + i] = extra_scores[static_cast<std::size_t>(i)];
        }
    }
    return {std::move(out), std::move(log)};
}

} // namespace biasaudit
