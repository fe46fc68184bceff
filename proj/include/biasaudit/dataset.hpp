#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biasaudit/types.hpp"

namespace biasaudit {

// Column layout of a tabular dataset. Feature columns are ordered; the
// protected set must be a non-empty subset of them for any audit run. Label,
// score and weight columns live outside the feature matrix.
struct DatasetSchema {
    std::vector<std::string> columns;
    std::vector<std::string> protected_features;
    std::optional<std::string> label_column;
    std::optional<std::string> score_column;
    std::optional<std::string> weight_column;
    // Integer label encodings for categorical columns: column -> token -> value.
    std::map<std::string, std::map<std::string, double>> encodings;

    // Throws SchemaError on duplicate/unknown/empty declarations.
    void validate() const;

    Index column_index(const std::string& name) const; // SchemaError if absent
    bool is_protected(const std::string& name) const;
    std::vector<std::string> unprotected_features() const;
};

// Immutable after construction; values are freely shareable across threads.
struct Dataset {
    DatasetSchema schema;
    Matrix rows;                   // m x n feature matrix
    std::optional<Vector> labels;  // {0,1}, length m
    std::optional<Vector> scores;  // reals, length m
    Vector weights;                // non-negative, length m (all 1 by default)

    Index row_count() const { return rows.rows(); }
    Index feature_count() const { return rows.cols(); }

    Vector column(const std::string& name) const;
    // Rows selected by index, labels/scores/weights carried along.
    Dataset select(const std::vector<Index>& idx) const;
};

struct ParseOptions {
    bool drop_missing = true;
    char delimiter = ',';
};

// RFC-4180 CSV with a mandatory header row. Columns are located by name, so
// files may carry extra columns (they are ignored); this doubles as the
// column whitelist for the public benchmark datasets. Rows containing
// missing cells are dropped when options.drop_missing is set.
Dataset load_csv(const std::string& path, const DatasetSchema& schema,
                 const ParseOptions& options = {});

// Same dialect as load_csv, one header row, '.' decimal separator.
void save_csv(const Dataset& ds, const std::string& path);

// Affine map fitted per feature column by normalize().
struct ColumnScale {
    double lo = 0.0;
    double hi = 1.0;

    double apply(double x) const { return hi > lo ? (x - lo) / (hi - lo) : 0.0; }
    double invert(double y) const { return hi > lo ? lo + y * (hi - lo) : lo; }
};

// Min-max maps every feature column into [0,1]; constant columns map to 0.
// Required before generator training because bias vectors are tanh-bounded.
std::pair<Dataset, std::vector<ColumnScale>> normalize(const Dataset& ds);

// Apply previously fitted scalers (e.g. train-fold scalers to a test fold).
Dataset apply_scalers(const Dataset& ds, const std::vector<ColumnScale>& scalers);

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> assignments; // length m, values in [0, k)

    std::vector<Index> fold_indices(int fold) const;
    std::vector<Index> complement_indices(int fold) const;
};

// Deterministic shuffled partition; fold sizes differ by at most one.
FoldPlan make_folds(Index m, int k, std::uint64_t seed);

// Names of protected features with fewer than two distinct values in the
// given rows. Empty result means the split is usable for evaluation.
std::vector<std::string> missing_protected_coverage(const Dataset& ds);

// Sanity-check dataset: three binary features named {biased, fair, random},
// of which biased and fair are protected, plus a binary label.
//   - biased equals the label on every row (maximal bias by construction);
//   - fair carries exactly equal positive-label rates in both of its groups,
//     so rate-based estimations of it are exactly zero;
//   - random is sampled i.i.d. uniform {0,1} from the seed.
// Rows are laid out in blocks of q = smallest prime factor of sample_count
// (floor(q/2) positive labels per block, blocks alternating fair = 1/0),
// which is the only layout that keeps the fair rates exactly equal when the
// count is not divisible by the number of value combinations. Odd prime
// counts admit no such layout and are rejected.
Dataset generate_synthetic(Index sample_count = 305, std::uint64_t seed = 7);

} // namespace biasaudit
