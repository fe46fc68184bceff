#include "biasaudit/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "biasaudit/errors.hpp"

namespace biasaudit {

namespace {

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size() - 1);
}

double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

void require_same_features(const std::map<std::string, double>& a,
                           const std::map<std::string, double>& b) {
    if (a.size() != b.size()) throw ArgumentError("feature sets differ in size");
    for (const auto& [name, value] : a) {
        if (!b.count(name)) throw ArgumentError("feature '" + name + "' missing on one side");
    }
}

} // namespace

std::map<std::string, int> rank_descending(const std::map<std::string, double>& values) {
    std::vector<std::pair<std::string, double>> order(values.begin(), values.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::map<std::string, int> ranks;
    for (std::size_t i = 0; i < order.size(); ++i) ranks[order[i].first] = static_cast<int>(i) + 1;
    return ranks;
}

GuidelineVerdicts check_guidelines(const std::map<std::string, double>& network,
                                   const std::map<std::string, double>& ensemble,
                                   const GuidelineConfig& cfg) {
    if (cfg.g1_slack < 0.0) throw ArgumentError("guideline slack must be non-negative");
    require_same_features(network, ensemble);
    if (network.empty()) throw ArgumentError("no features to compare");

    GuidelineVerdicts v;
    v.g3_bound = cfg.g3_bound;

    double worst = -std::numeric_limits<double>::infinity();
    std::vector<double> differences;
    for (const auto& [name, net] : network) {
        const double ens = ensemble.at(name);
        worst = std::max(worst, ens - net);
        differences.push_back(net - ens);
    }
    v.g1_worst_slack = worst;
    v.g1_pass = worst <= cfg.g1_slack;

    if (network.size() < 2) {
        v.g2_degenerate = v.g3_degenerate = true;
        v.g2_pass = v.g3_pass = true;
        v.g3_variance = 0.0;
        return v;
    }

    v.g2_pass = rank_descending(network) == rank_descending(ensemble);
    v.g3_variance = sample_variance(differences);
    v.g3_pass = v.g3_variance <= cfg.g3_bound;
    return v;
}

ModelFactory tree_factory(const TreeConfig& cfg) {
    return [cfg](const Dataset& normalized_train, const std::vector<ColumnScale>&) {
        return std::make_shared<const DecisionTree>(DecisionTree::train(normalized_train, cfg));
    };
}

SplitOutcome audit_split(const Dataset& train, const Dataset& eval, const ModelFactory& factory,
                         const PipelineConfig& cfg) {
    if (train.schema.protected_features.empty()) {
        throw DataError("the protected feature set is empty");
    }
    const auto uncovered = missing_protected_coverage(eval);
    if (!uncovered.empty()) {
        std::string names = uncovered.front();
        for (std::size_t i = 1; i < uncovered.size(); ++i) names += ", " + uncovered[i];
        throw DataError("evaluation rows lack a second value for protected feature(s): " + names);
    }

    auto [norm_train, scalers] = normalize(train);
    const Dataset norm_eval = apply_scalers(eval, scalers);

    SplitOutcome out;
    out.model = factory(norm_train, scalers);
    const Vector soft = out.model->predict_batch(norm_eval.rows);

    for (const auto& feature : norm_eval.schema.protected_features) {
        EstimateAllResult result = estimate_all_with_predictions(norm_eval, soft, feature,
                                                                 cfg.convention, cfg.metrics);
        const EnsembleEntry entry = aggregate(result, feature);
        out.ensemble[feature] = entry.value;
        out.ensemble_argmax[feature] = metric_name(entry.argmax);
        out.metric_results.emplace(feature, std::move(result));
    }

    if (cfg.run_network) {
        GeneratorNet net(norm_train.feature_count(), cfg.generator, cfg.train.seed);
        out.train_log = biasaudit::train(net, norm_train, *out.model, cfg.loss, cfg.train);
        const Matrix vectors = net.forward(norm_eval.rows);
        out.network_full = post_process(vectors);
        for (const auto& [name, value] : protected_entries(out.network_full, norm_eval.schema)) {
            out.network[name] = value;
        }
        out.generator_json = net.to_json();
    }
    return out;
}

CvOutcome cross_validate(const Dataset& ds, const FoldPlan& plan, const ModelFactory& factory,
                         const PipelineConfig& cfg) {
    if (plan.assignments.size() != static_cast<std::size_t>(ds.row_count())) {
        throw ArgumentError("fold plan does not match the dataset");
    }
    CvOutcome out;
    std::map<std::string, std::vector<double>> net_values, ens_values;
    for (int f = 0; f < plan.k; ++f) {
        const Dataset test = ds.select(plan.fold_indices(f));
        const Dataset train_split = ds.select(plan.complement_indices(f));
        const auto uncovered = missing_protected_coverage(test);
        if (!uncovered.empty()) {
            std::string msg = "fold " + std::to_string(f) + " lacks a second value for '" +
                              uncovered.front() + "'";
            if (cfg.strict_folds) throw DataError(msg);
            out.warnings.push_back(msg + "; fold skipped");
            continue;
        }
        PipelineConfig fold_cfg = cfg;
        fold_cfg.train.seed = cfg.train.seed + static_cast<std::uint64_t>(f);
        SplitOutcome fold = audit_split(train_split, test, factory, fold_cfg);
        for (const auto& [name, value] : fold.network) net_values[name].push_back(value);
        for (const auto& [name, value] : fold.ensemble) ens_values[name].push_back(value);
        out.folds.push_back(std::move(fold));
    }
    if (out.folds.empty()) throw DataError("every fold was unusable");

    for (const auto& [name, values] : ens_values) {
        FeatureFoldStats s;
        s.ensemble_per_fold = values;
        s.ensemble_mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        s.ensemble_std = population_std(values);
        if (net_values.count(name)) {
            s.network_per_fold = net_values[name];
            s.network_mean = std::accumulate(s.network_per_fold.begin(), s.network_per_fold.end(), 0.0) /
                             static_cast<double>(s.network_per_fold.size());
            s.network_std = population_std(s.network_per_fold);
        }
        out.stats[name] = s;
    }
    return out;
}

namespace {

BiasReport assemble_report(const std::map<std::string, double>& network,
                           const std::map<std::string, double>& ensemble,
                           const std::map<std::string, std::string>& argmax,
                           const std::map<std::string, FeatureFoldStats>* folds,
                           const PipelineConfig& cfg, const std::string& config_hash) {
    BiasReport report;
    report.convention = cfg.convention == Convention::Corrected ? "corrected" : "verbatim";
    report.train_seed = cfg.train.seed;
    report.config_hash = config_hash;
    report.notes.push_back("predictions thresholded at " +
                           std::to_string(cfg.metrics.prediction_threshold));

    const auto ens_ranks = rank_descending(ensemble);
    std::map<std::string, int> net_ranks;
    if (!network.empty()) net_ranks = rank_descending(network);

    std::vector<double> differences;
    for (const auto& [name, ens] : ensemble) {
        FeatureReport fr;
        fr.feature = name;
        fr.ensemble = ens;
        fr.ensemble_rank = ens_ranks.at(name);
        fr.ensemble_argmax = argmax.count(name) ? argmax.at(name) : "";
        if (network.count(name)) {
            fr.network = network.at(name);
            fr.network_rank = net_ranks.at(name);
            fr.difference = fr.network - fr.ensemble;
            differences.push_back(fr.difference);
        }
        if (folds && folds->count(name)) fr.folds = folds->at(name);
        report.features.push_back(std::move(fr));
    }
    report.differences_variance = sample_variance(differences);
    if (!network.empty()) {
        report.guidelines = check_guidelines(network, ensemble, cfg.guidelines);
    }
    return report;
}

} // namespace

BiasReport make_report(const SplitOutcome& outcome, const PipelineConfig& cfg,
                       const std::string& config_hash) {
    return assemble_report(outcome.network, outcome.ensemble, outcome.ensemble_argmax, nullptr, cfg,
                           config_hash);
}

BiasReport make_report(const CvOutcome& outcome, const PipelineConfig& cfg,
                       const std::string& config_hash) {
    std::map<std::string, double> network, ensemble;
    std::map<std::string, std::string> argmax;
    for (const auto& [name, stats] : outcome.stats) {
        ensemble[name] = stats.ensemble_mean;
        if (!stats.network_per_fold.empty()) network[name] = stats.network_mean;
    }
    // Provenance from the first fold; the headline numbers are fold means.
    if (!outcome.folds.empty()) argmax = outcome.folds.front().ensemble_argmax;
    BiasReport report = assemble_report(network, ensemble, argmax, &outcome.stats, cfg, config_hash);
    for (const auto& w : outcome.warnings) report.notes.push_back(w);
    return report;
}

std::string BiasReport::to_json(bool with_timestamp) const {
    nlohmann::json j;
    j["version"] = kVersion;
    j["convention"] = convention;
    j["train_seed"] = train_seed;
    if (fold_seed) j["fold_seed"] = *fold_seed;
    j["config_hash"] = config_hash;
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        j["generated_at"] = buf;
    }
    auto& features = j["features"] = nlohmann::json::array();
    for (const FeatureReport& f : this->features) {
        nlohmann::json fj = {{"feature", f.feature},
                             {"network", f.network},
                             {"ensemble", f.ensemble},
                             {"network_rank", f.network_rank},
                             {"ensemble_rank", f.ensemble_rank},
                             {"difference", f.difference},
                             {"ensemble_argmax", f.ensemble_argmax}};
        if (f.folds) {
            fj["folds"] = {{"network_mean", f.folds->network_mean},
                           {"network_std", f.folds->network_std},
                           {"ensemble_mean", f.folds->ensemble_mean},
                           {"ensemble_std", f.folds->ensemble_std},
                           {"network_per_fold", f.folds->network_per_fold},
                           {"ensemble_per_fold", f.folds->ensemble_per_fold}};
        }
        features.push_back(std::move(fj));
    }
    j["differences_variance"] = differences_variance;
    j["guidelines"] = {{"g1_pass", guidelines.g1_pass},
                       {"g1_worst_slack", guidelines.g1_worst_slack},
                       {"g2_pass", guidelines.g2_pass},
                       {"g2_degenerate", guidelines.g2_degenerate},
                       {"g3_pass", guidelines.g3_pass},
                       {"g3_degenerate", guidelines.g3_degenerate},
                       {"g3_variance", guidelines.g3_variance},
                       {"g3_bound", guidelines.g3_bound}};
    j["notes"] = notes;
    return j.dump(2);
}

BiasReport BiasReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    BiasReport r;
    r.convention = j.at("convention").get<std::string>();
    r.train_seed = j.at("train_seed").get<std::uint64_t>();
    if (j.contains("fold_seed")) r.fold_seed = j.at("fold_seed").get<std::uint64_t>();
    r.config_hash = j.value("config_hash", "");
    for (const auto& fj : j.at("features")) {
        FeatureReport f;
        f.feature = fj.at("feature").get<std::string>();
        f.network = fj.at("network").get<double>();
        f.ensemble = fj.at("ensemble").get<double>();
        f.network_rank = fj.at("network_rank").get<int>();
        f.ensemble_rank = fj.at("ensemble_rank").get<int>();
        f.difference = fj.at("difference").get<double>();
        f.ensemble_argmax = fj.value("ensemble_argmax", "");
        r.features.push_back(std::move(f));
    }
    r.differences_variance = j.at("differences_variance").get<double>();
    const auto& g = j.at("guidelines");
    r.guidelines.g1_pass = g.at("g1_pass").get<bool>();
    r.guidelines.g1_worst_slack = g.at("g1_worst_slack").get<double>();
    r.guidelines.g2_pass = g.at("g2_pass").get<bool>();
    r.guidelines.g2_degenerate = g.at("g2_degenerate").get<bool>();
    r.guidelines.g3_pass = g.at("g3_pass").get<bool>();
    r.guidelines.g3_degenerate = g.at("g3_degenerate").get<bool>();
    r.guidelines.g3_variance = g.at("g3_variance").get<double>();
    r.guidelines.g3_bound = g.at("g3_bound").get<double>();
    if (j.contains("notes")) r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
}

std::string BiasReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "bias estimations (" << convention << " convention";
    if (!config_hash.empty()) os << ", config " << config_hash;
    os << ")\n";
    os << std::left << std::setw(24) << "feature" << std::right << std::setw(10) << "ensemble"
       << std::setw(10) << "network" << std::setw(8) << "rk(e)" << std::setw(8) << "rk(n)"
       << std::setw(12) << "difference" << "  argmax\n";
    for (const FeatureReport& f : features) {
        os << std::left << std::setw(24) << f.feature << std::right << std::setw(10) << f.ensemble
           << std::setw(10) << f.network << std::setw(8) << f.ensemble_rank << std::setw(8)
           << f.network_rank << std::setw(12) << f.difference << "  " << f.ensemble_argmax << "\n";
        if (f.folds) {
            os << "    folds: network " << f.folds->network_mean << " +/- " << f.folds->network_std
               << ", ensemble " << f.folds->ensemble_mean << " +/- " << f.folds->ensemble_std << "\n";
        }
    }
    os << "differences variance: " << std::setprecision(6) << differences_variance << "\n";
    os << "G1 (network >= ensemble - slack): " << (guidelines.g1_pass ? "pass" : "FAIL")
       << " (worst slack " << guidelines.g1_worst_slack << ")\n";
    os << "G2 (identical rankings): "
       << (guidelines.g2_degenerate ? "degenerate-pass" : (guidelines.g2_pass ? "pass" : "FAIL"))
       << "\n";
    os << "G3 (difference variance <= " << guidelines.g3_bound << "): "
       << (guidelines.g3_degenerate ? "degenerate-pass" : (guidelines.g3_pass ? "pass" : "FAIL"))
       << " (variance " << guidelines.g3_variance << ")\n";
    return os.str();
}

std::vector<DeltaEntry> mitigation_delta(const BiasReport& before, const BiasReport& after,
                                         double deadzone) {
    if (before.convention != after.convention) {
        throw ArgumentError("reports use different conventions");
    }
    std::map<std::string, const FeatureReport*> lookup;
    for (const auto& f : after.features) lookup[f.feature] = &f;
    if (lookup.size() != before.features.size()) throw ArgumentError("reports cover different features");

    auto sign = [deadzone](double x) { return std::abs(x) < deadzone ? 0 : (x > 0 ? 1 : -1); };

    std::vector<DeltaEntry> out;
    for (const auto& f : before.features) {
        const auto it = lookup.find(f.feature);
        if (it == lookup.end()) throw ArgumentError("feature '" + f.feature + "' missing after mitigation");
        DeltaEntry d;
        d.feature = f.feature;
        d.ensemble_delta = it->second->ensemble - f.ensemble;
        d.network_delta = it->second->network - f.network;
        d.agree = sign(d.ensemble_delta) == sign(d.network_delta);
        out.push_back(std::move(d));
    }
    return out;
}

std::string deltas_to_csv(const std::vector<DeltaEntry>& deltas) {
    std::ostringstream os;
    os.precision(17);
    os << "feature,ensemble_delta,network_delta,agree\n";
    for (const DeltaEntry& d : deltas) {
        os << d.feature << "," << d.ensemble_delta << "," << d.network_delta << ","
           << (d.agree ? 1 : 0) << "\n";
    }
    return os.str();
}

} // namespace biasaudit
