#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "biasaudit/dataset.hpp"
#include "biasaudit/model.hpp"
#include "biasaudit/types.hpp"

namespace biasaudit {

struct GeneratorConfig {
    Index hidden_layers = 8;
    Index hidden_units = 40;
    // Multiplier on the uniform init bound sqrt(6/(fan_in+fan_out)).
    double init_gain = 1.0;
};

// Fully-connected generator: ReLU hidden layers, tanh output of width n.
// Row i of forward(batch) is the bias vector for sample i, entries in (-1,1).
class GeneratorNet {
public:
    struct Layer {
        Matrix weights; // out x in
        Vector bias;    // out
    };

    GeneratorNet(Index n_features, const GeneratorConfig& config, std::uint64_t seed);

    Matrix forward(const Matrix& batch) const;

    Index feature_count() const { return n_features_; }
    const GeneratorConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::string to_json() const;
    static GeneratorNet from_json(const std::string& text);

private:
    GeneratorNet() = default;

    std::vector<Layer> layers_;
    Index n_features_ = 0;
    GeneratorConfig config_;
    std::uint64_t seed_ = 0;
};

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    // Sharpness of the smooth nonzero-entry count s(b) = b^2/(b^2+eps^2).
    // The count term's restoring gradient peaks at lambda2/(2*eps); eps must
    // keep that peak below the prediction-change pull (at most lambda1) or
    // no entry can ever cross from "off" to "on" or back.
    double epsilon = 1.5;
    // Zeroth-order probe step on normalized features. Probes must straddle
    // the gap between adjacent feature levels or a piecewise-constant model
    // yields no training signal at all; 0.5 spans binary features.
    double fd_step = 0.5;
    // Feed M(clamp(x+B, 0, 1)) instead of the raw perturbed sample.
    bool clamp_perturbed = false;
};

struct TrainConfig {
    Index batch_size = 128;
    Index epochs = 300;
    // The similarity term sums over ordered batch pairs, so its gradients
    // scale with the batch size; rates much above 1/(4*batch) oscillate.
    double learning_rate = 0.001;
    std::uint64_t seed = 17;
};

struct LossBreakdown {
    double prediction_change = 0.0; // -lambda1 * sum (M(x+B)-M(x))^2, always <= 0
    double feature_selection = 0.0; // +lambda2 * sum (smooth nonzero count)^2, >= 0
    double similarity = 0.0;        // +lambda3 * sum over ordered batch pairs, >= 0
    double total = 0.0;
};

// Direct evaluation of the loss given already-generated bias vectors.
LossBreakdown loss_from_vectors(const Matrix& bias_vectors, const Matrix& batch,
                                const Predictor& model, const LossConfig& cfg);

LossBreakdown loss(const GeneratorNet& net, const Matrix& batch, const Predictor& model,
                   const LossConfig& cfg);

struct ParameterGradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;
    LossBreakdown loss;
};

// Full-loss parameter gradients. Terms 2 and 3 are exact backpropagation;
// the prediction-change term differentiates the black box by per-coordinate
// central differences of the squared outcome change (2n extra queries per
// sample), chained into the network backprop.
ParameterGradients parameter_gradients(const GeneratorNet& net, const Matrix& batch,
                                       const Predictor& model, const LossConfig& cfg);

// One mini-batch descent step; returns the loss at the pre-update point.
// Throws TrainingError on non-finite loss or gradients.
LossBreakdown grad_step(GeneratorNet& net, const Matrix& batch, const Predictor& model,
                        const LossConfig& cfg, double learning_rate);

struct EpochLog {
    Index epoch = 0;
    LossBreakdown loss; // summed over the epoch's batches
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    std::string to_csv() const; // epoch,term1,term2,term3,total
};

// Shuffled mini-batch descent for cfg.epochs epochs; deterministic given
// seeds. The dataset must be normalized (generator output is tanh-bounded).
TrainLog train(GeneratorNet& net, const Dataset& ds, const Predictor& model,
               const LossConfig& lcfg, const TrainConfig& tcfg);

// Absolute mean of each bias-vector entry across samples; in [0,1]^n.
Vector post_process(const Matrix& bias_vectors);

// Targeted evaluation: pick out the protected entries of an estimate vector.
std::map<std::string, double> protected_entries(const Vector& estimate, const DatasetSchema& schema);

} // namespace biasaudit
