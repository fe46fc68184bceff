#pragma once

#include <string>
#include <vector>

#include "biasaudit/dataset.hpp"

namespace biasaudit {

struct MitigationConfig {
    double positive_contribution_weight = 1.0;
    double other_weight = 0.1;
    double variance_threshold = 0.0045;
    long max_iterations = 200000;
};

// Population variance across protected groups of the weighted positive-label
// probability P(label = 1 | group). 0 for a single group.
double group_positive_variance(const Dataset& ds, const std::string& feature);

struct MitigationStep {
    long iteration = 0;
    double group = 0.0;     // protected value of the group that was balanced
    Index row_index = 0;    // replicated row
    double weight = 0.0;    // weight given to the replica
    double variance = 0.0;  // group positive variance after the append
};

struct MitigationLog {
    std::vector<MitigationStep> steps;
    double initial_variance = 0.0;
    double final_variance = 0.0;
    bool reached_threshold = false;
    bool hit_iteration_cap = false;

    std::string to_csv() const; // iteration,group,row_index,weight,variance
};

// Re-weighting mitigation: per round, each group with a below-mean positive
// rate replicates its first positive-labeled row and each above-mean group
// its first negative-labeled row. A replica gets the positive-contribution
// weight when appending it at that weight strictly decreases the group
// positive variance, the smaller weight when only the smaller weight does,
// and is skipped otherwise, so the variance trajectory never increases.
// Stops once the variance reaches the threshold or after max_iterations
// rounds. The input rows are returned unchanged as a prefix of the output.
// Throws MitigationError when no replica can make progress (for example, a
// below-mean group with no positive samples).
std::pair<Dataset, MitigationLog> reweight(const Dataset& ds, const std::string& feature,
                                           const MitigationConfig& cfg);

} // namespace biasaudit
