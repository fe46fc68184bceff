#pragma once

#include <string>
#include <vector>

#include "biasaudit/dataset.hpp"
#include "biasaudit/metrics.hpp"
#include "biasaudit/rng.hpp"

namespace fixtures {

inline biasaudit::EvalInput eval_input(std::vector<double> pred, std::vector<double> fp) {
    biasaudit::EvalInput in;
    in.predictions = Eigen::Map<const biasaudit::Vector>(pred.data(), static_cast<biasaudit::Index>(pred.size()));
    in.protected_values = Eigen::Map<const biasaudit::Vector>(fp.data(), static_cast<biasaudit::Index>(fp.size()));
    return in;
}

inline biasaudit::EvalInput eval_input(std::vector<double> pred, std::vector<double> fp,
                                       std::vector<double> labels) {
    biasaudit::EvalInput in = eval_input(std::move(pred), std::move(fp));
    in.labels = Eigen::Map<const biasaudit::Vector>(labels.data(), static_cast<biasaudit::Index>(labels.size()));
    return in;
}

// A labeled dataset whose protected feature "group" is strongly but not
// perfectly predictive of the label: P(label=1 | group=1) = 0.9 and
// P(label=1 | group=0) = 0.1. Unlike the sanity-check synthetic set it can
// be re-weighted, which makes it the fixture for mitigation pipelines.
inline biasaudit::Dataset mitigable_biased_dataset(biasaudit::Index per_group = 100,
                                                   std::uint64_t seed = 5) {
    using namespace biasaudit;
    Dataset ds;
    ds.schema.columns = {"group", "other"};
    ds.schema.protected_features = {"group"};
    ds.schema.label_column = "label";
    const Index m = 2 * per_group;
    ds.rows.resize(m, 2);
    ds.labels = Vector(m);
    ds.weights = Vector::Ones(m);
    Rng rng(seed);
    for (Index i = 0; i < m; ++i) {
        const double group = i < per_group ? 1.0 : 0.0;
        const bool majority = (i % per_group) < (9 * per_group) / 10;
        const double label = group == 1.0 ? (majority ? 1.0 : 0.0) : (majority ? 0.0 : 1.0);
        ds.rows(i, 0) = group;
        ds.rows(i, 1) = static_cast<double>(rng.coin());
        (*ds.labels)[i] = label;
    }
    return ds;
}

} // namespace fixtures
