#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biasaudit/dataset.hpp"
#include "biasaudit/types.hpp"

namespace biasaudit {

// Black-box classifier contract. Implementations must be deterministic
// (identical input matrix -> identical output vector), total on finite
// inputs (perturbed samples may leave [0,1] and must still be answered),
// and safe for concurrent read-only queries.
class Predictor {
public:
    virtual ~Predictor() = default;

    // rows: m x n, n must match the training dimension. Returns outcomes in [0,1].
    virtual Vector predict_batch(const Matrix& rows) const = 0;

    virtual Index feature_count() const = 0;
};

struct TreeConfig {
    Index min_samples_split = 2;
    Index max_depth = -1; // negative means unlimited
};

// CART with Gini impurity: best split over all features and midpoints of
// consecutive sorted distinct values, ties broken by lowest feature index
// then lowest threshold. A node splits whenever it is impure and a valid
// split exists, even at zero gain, mirroring the usual library defaults.
// Leaves predict the weighted positive fraction (soft score in [0,1]).
class DecisionTree final : public Predictor {
public:
    struct Node {
        Index feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        Index left = -1;
        Index right = -1;
        double value = 0.0; // leaf prediction
    };

    static DecisionTree train(const Dataset& ds, const TreeConfig& config = {});

    Vector predict_batch(const Matrix& rows) const override;
    Index feature_count() const override { return n_features_; }

    const std::vector<Node>& nodes() const { return nodes_; }
    Index depth() const;

    std::string to_json() const;
    static DecisionTree from_json(const std::string& text);

private:
    std::vector<Node> nodes_;
    Index n_features_ = 0;
};

// Adapter for an out-of-process model. Each batch is written as a CSV
// request file (no header, features only); the child is invoked with the
// request and response paths substituted for {request} and {response} in
// the command (appended as trailing arguments when no placeholder is
// present) and must write one decimal outcome per line.
class ExternalModel final : public Predictor {
public:
    ExternalModel(std::string command, std::string exchange_dir, double timeout_seconds,
                  Index n_features);

    Vector predict_batch(const Matrix& rows) const override;
    Index feature_count() const override { return n_features_; }

private:
    std::string command_;
    std::string exchange_dir_;
    double timeout_seconds_;
    Index n_features_;
};

// Presents a predictor trained on raw features as one that answers queries
// in normalized [0,1] space: each query column is mapped back through the
// inverse affine scaler before the wrapped model sees it.
class RescaledPredictor final : public Predictor {
public:
    RescaledPredictor(std::shared_ptr<const Predictor> base, std::vector<ColumnScale> scalers)
        : base_(std::move(base)), scalers_(std::move(scalers)) {}

    Vector predict_batch(const Matrix& rows) const override;
    Index feature_count() const override { return base_->feature_count(); }

private:
    std::shared_ptr<const Predictor> base_;
    std::vector<ColumnScale> scalers_;
};

// Fixed outcome vector aligned to one specific dataset; usable for metric
// evaluation only (it cannot answer perturbed queries).
class PrecomputedPredictor final : public Predictor {
public:
    PrecomputedPredictor(Vector outcomes, Index n_features)
        : outcomes_(std::move(outcomes)), n_features_(n_features) {}

    Vector predict_batch(const Matrix& rows) const override;
    Index feature_count() const override { return n_features_; }

    static PrecomputedPredictor from_file(const std::string& path, Index n_features);

private:
    Vector outcomes_;
    Index n_features_;
};

} // namespace biasaudit
