#include "biasaudit/generator.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "biasaudit/errors.hpp"
#include "biasaudit/rng.hpp"

namespace biasaudit {

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

double surrogate(double b, double eps) {
    const double b2 = b * b;
    return b2 / (b2 + eps * eps);
}

double surrogate_grad(double b, double eps) {
    const double e2 = eps * eps;
    const double d = b * b + e2;
    return 2.0 * b * e2 / (d * d);
}

} // namespace

GeneratorNet::GeneratorNet(Index n_features, const GeneratorConfig& config, std::uint64_t seed)
    : n_features_(n_features), config_(config), seed_(seed) {
    if (n_features < 1) throw ArgumentError("generator needs at least one feature");
    if (config.hidden_layers < 1 || config.hidden_units < 1) {
        throw ArgumentError("generator needs at least one hidden layer and unit");
    }
    Rng rng(seed);
    std::vector<Index> dims;
    dims.push_back(n_features);
    for (Index l = 0; l < config.hidden_layers; ++l) dims.push_back(config.hidden_units);
    dims.push_back(n_features);

    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Index in = dims[l], out = dims[l + 1];
        const double r = config.init_gain * std::sqrt(6.0 / static_cast<double>(in + out));
        Layer layer;
        layer.weights.resize(out, in);
        layer.bias.resize(out);
        for (Index i = 0; i < out; ++i) {
            for (Index j = 0; j < in; ++j) layer.weights(i, j) = rng.uniform(-r, r);
        }
        for (Index i = 0; i < out; ++i) layer.bias[i] = rng.uniform(-r, r);
        layers_.push_back(std::move(layer));
    }
}

Matrix GeneratorNet::forward(const Matrix& batch) const {
    if (batch.cols() != n_features_) {
        throw ArgumentError("generator expects " + std::to_string(n_features_) + " features, got " +
                            std::to_string(batch.cols()));
    }
    if (!batch.allFinite()) throw ArgumentError("generator input contains non-finite values");
    Matrix a = batch;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Matrix z = a * layers_[l].weights.transpose();
        z.rowwise() += layers_[l].bias.transpose();
        a = l + 1 < layers_.size() ? relu(z) : z.array().tanh().matrix();
    }
    return a;
}

std::string GeneratorNet::to_json() const {
    nlohmann::json j;
    j["format"] = "bias-vector-generator";
    j["version"] = 1;
    j["n_features"] = n_features_;
    j["seed"] = seed_;
    j["config"] = {{"hidden_layers", config_.hidden_layers},
                   {"hidden_units", config_.hidden_units},
                   {"init_gain", config_.init_gain}};
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const Layer& layer : layers_) {
        nlohmann::json weights = nlohmann::json::array();
        for (Index i = 0; i < layer.weights.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Index k = 0; k < layer.weights.cols(); ++k) row.push_back(layer.weights(i, k));
            weights.push_back(std::move(row));
        }
        nlohmann::json bias = nlohmann::json::array();
        for (Index i = 0; i < layer.bias.size(); ++i) bias.push_back(layer.bias[i]);
        layers.push_back({{"rows", layer.weights.rows()},
                          {"cols", layer.weights.cols()},
                          {"weights", std::move(weights)},
                          {"bias", std::move(bias)}});
    }
    return j.dump();
}

GeneratorNet GeneratorNet::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "bias-vector-generator") {
        throw ParseError("not a generator document");
    }
    if (j.value("version", 0) != 1) throw ParseError("unsupported generator version");
    GeneratorNet net;
    net.n_features_ = j.at("n_features").get<Index>();
    net.seed_ = j.at("seed").get<std::uint64_t>();
    net.config_.hidden_layers = j.at("config").at("hidden_layers").get<Index>();
    net.config_.hidden_units = j.at("config").at("hidden_units").get<Index>();
    net.config_.init_gain = j.at("config").at("init_gain").get<double>();
    for (const auto& lj : j.at("layers")) {
        GeneratorNet::Layer layer;
        const Index rows = lj.at("rows").get<Index>();
        const Index cols = lj.at("cols").get<Index>();
        layer.weights.resize(rows, cols);
        const auto& w = lj.at("weights");
        for (Index i = 0; i < rows; ++i) {
            for (Index k = 0; k < cols; ++k) layer.weights(i, k) = w[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
        }
        layer.bias.resize(rows);
        const auto& b = lj.at("bias");
        for (Index i = 0; i < rows; ++i) layer.bias[i] = b[static_cast<std::size_t>(i)].get<double>();
        net.layers_.push_back(std::move(layer));
    }
    if (net.layers_.empty()) throw ParseError("generator document has no layers");
    return net;
}

namespace {

Matrix clamp_unit(const Matrix& m) {
    return m.cwiseMax(0.0).cwiseMin(1.0);
}

Vector query(const Predictor& model, const Matrix& rows, bool clamp) {
    return model.predict_batch(clamp ? clamp_unit(rows) : rows);
}

} // namespace

LossBreakdown loss_from_vectors(const Matrix& bias_vectors, const Matrix& batch,
                                const Predictor& model, const LossConfig& cfg) {
    if (bias_vectors.rows() != batch.rows() || bias_vectors.cols() != batch.cols()) {
        throw ArgumentError("bias vector matrix must match the batch shape");
    }
    if (batch.rows() < 2) throw ArgumentError("the similarity term needs at least 2 samples");

    const Index k = batch.rows();
    const Index n = batch.cols();
    LossBreakdown out;

    if (cfg.lambda1 != 0.0) {
        const Vector base = query(model, batch, false);
        const Vector perturbed = query(model, batch + bias_vectors, cfg.clamp_perturbed);
        out.prediction_change = -cfg.lambda1 * (perturbed - base).squaredNorm();
    }

    for (Index i = 0; i < k; ++i) {
        double count = 0.0;
        for (Index j = 0; j < n; ++j) count += surrogate(bias_vectors(i, j), cfg.epsilon);
        out.feature_selection += count * count;
    }
    out.feature_selection *= cfg.lambda2;

    // Ordered-pair similarity via the sum identity:
    //   sum_{i,j} ||B_i - B_j||^2 = 2k * sum_i ||B_i||^2 - 2 ||sum_i B_i||^2
    const double sq_sum = bias_vectors.squaredNorm();
    const Vector col_sums = bias_vectors.colwise().sum();
    out.similarity = cfg.lambda3 * (2.0 * static_cast<double>(k) * sq_sum - 2.0 * col_sums.squaredNorm());
    out.similarity = std::max(0.0, out.similarity); // guard tiny negative round-off

    out.total = out.prediction_change + out.feature_selection + out.similarity;
    return out;
}

LossBreakdown loss(const GeneratorNet& net, const Matrix& batch, const Predictor& model,
                   const LossConfig& cfg) {
    return loss_from_vectors(net.forward(batch), batch, model, cfg);
}

ParameterGradients parameter_gradients(const GeneratorNet& net, const Matrix& batch,
                                       const Predictor& model, const LossConfig& cfg) {
    const Index k = batch.rows();
    const Index n = batch.cols();
    if (k < 2) throw ArgumentError("the similarity term needs at least 2 samples");

    // Forward with caches.
    const auto& layers = net.layers();
    std::vector<Matrix> activations; // activations[0] = input
    activations.reserve(layers.size() + 1);
    activations.push_back(batch);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = activations.back() * layers[l].weights.transpose();
        z.rowwise() += layers[l].bias.transpose();
        activations.push_back(l + 1 < layers.size() ? relu(z) : z.array().tanh().matrix());
    }
    const Matrix& bias_vectors = activations.back();

    ParameterGradients out;
    out.loss = loss_from_vectors(bias_vectors, batch, model, cfg);

    // d(loss)/d(bias vector), assembled per term.
    Matrix dloss_db = Matrix::Zero(k, n);

    if (cfg.lambda1 != 0.0) {
        // Central differences of the squared outcome change itself; the
        // chained-Jacobian form 2*(M(x+B)-M(x)) * dM/dB is identically zero
        // wherever the outcome has not changed yet, which for a tree model
        // is almost everywhere.
        const Vector base = query(model, batch, false);
        const Matrix perturbed = batch + bias_vectors;
        for (Index j = 0; j < n; ++j) {
            Matrix plus = perturbed, minus = perturbed;
            plus.col(j).array() += cfg.fd_step;
            minus.col(j).array() -= cfg.fd_step;
            const Vector out_plus = query(model, plus, cfg.clamp_perturbed);
            const Vector out_minus = query(model, minus, cfg.clamp_perturbed);
            for (Index i = 0; i < k; ++i) {
                const double sq_plus = (out_plus[i] - base[i]) * (out_plus[i] - base[i]);
                const double sq_minus = (out_minus[i] - base[i]) * (out_minus[i] - base[i]);
                dloss_db(i, j) += -cfg.lambda1 * (sq_plus - sq_minus) / (2.0 * cfg.fd_step);
            }
        }
    }

    for (Index i = 0; i < k; ++i) {
        double count = 0.0;
        for (Index j = 0; j < n; ++j) count += surrogate(bias_vectors(i, j), cfg.epsilon);
        for (Index j = 0; j < n; ++j) {
            dloss_db(i, j) += cfg.lambda2 * 2.0 * count * surrogate_grad(bias_vectors(i, j), cfg.epsilon);
        }
    }

    const Vector col_sums = bias_vectors.colwise().sum();
    for (Index i = 0; i < k; ++i) {
        for (Index j = 0; j < n; ++j) {
            dloss_db(i, j) += cfg.lambda3 * 4.0 * (static_cast<double>(k) * bias_vectors(i, j) - col_sums[j]);
        }
    }

    // Backward pass.
    out.weights.resize(layers.size());
    out.bias.resize(layers.size());
    Matrix delta = dloss_db.cwiseProduct(
        (Matrix::Ones(k, n) - bias_vectors.cwiseProduct(bias_vectors))); // tanh'
    for (std::size_t l = layers.size(); l-- > 0;) {
        out.weights[l] = delta.transpose() * activations[l];
        out.bias[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix upstream = delta * layers[l].weights;
            delta = upstream.cwiseProduct(
                activations[l].unaryExpr([](double a) { return a > 0.0 ? 1.0 : 0.0; }));
        }
    }

    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!out.weights[l].allFinite() || !out.bias[l].allFinite()) {
            throw TrainingError("non-finite gradient in generator layer " + std::to_string(l));
        }
    }
    if (!std::isfinite(out.loss.total)) throw TrainingError("non-finite generator loss");
    return out;
}

LossBreakdown grad_step(GeneratorNet& net, const Matrix& batch, const Predictor& model,
                        const LossConfig& cfg, double learning_rate) {
    ParameterGradients grads = parameter_gradients(net, batch, model, cfg);
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights -= learning_rate * grads.weights[l];
        layers[l].bias -= learning_rate * grads.bias[l];
        if (!layers[l].weights.allFinite() || !layers[l].bias.allFinite()) {
            throw TrainingError("non-finite parameters after update in layer " + std::to_string(l));
        }
    }
    return grads.loss;
}

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,prediction_change,feature_selection,similarity,total\n";
    for (const EpochLog& e : epochs) {
        os << e.epoch << "," << e.loss.prediction_change << "," << e.loss.feature_selection << ","
           << e.loss.similarity << "," << e.loss.total << "\n";
    }
    return os.str();
}

TrainLog train(GeneratorNet& net, const Dataset& ds, const Predictor& model,
               const LossConfig& lcfg, const TrainConfig& tcfg) {
    if (tcfg.epochs < 1) throw ArgumentError("training needs at least one epoch");
    if (tcfg.batch_size < 2) throw ArgumentError("batch size must be at least 2");
    const Index m = ds.row_count();
    if (m < 2) throw ArgumentError("training needs at least 2 samples");

    Rng rng(tcfg.seed);
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});

    TrainLog log;
    log.epochs.reserve(static_cast<std::size_t>(tcfg.epochs));
    for (Index epoch = 0; epoch < tcfg.epochs; ++epoch) {
        rng.shuffle(order);
        EpochLog entry;
        entry.epoch = epoch;
        Index at = 0;
        while (at < m) {
            Index size = std::min(tcfg.batch_size, m - at);
            // A trailing single row cannot feed the similarity term; fold it
            // into the current batch instead.
            if (m - (at + size) == 1) size += 1;
            Matrix batch(size, ds.feature_count());
            for (Index i = 0; i < size; ++i) {
                batch.row(i) = ds.rows.row(order[static_cast<std::size_t>(at + i)]);
            }
            const LossBreakdown b = grad_step(net, batch, model, lcfg, tcfg.learning_rate);
            entry.loss.prediction_change += b.prediction_change;
            entry.loss.feature_selection += b.feature_selection;
            entry.loss.similarity += b.similarity;
            entry.loss.total += b.total;
            at += size;
        }
        log.epochs.push_back(entry);
    }
    return log;
}

Vector post_process(const Matrix& bias_vectors) {
    if (bias_vectors.rows() < 1) throw ArgumentError("post-processing needs at least one bias vector");
    return bias_vectors.cwiseAbs().colwise().mean();
}

std::map<std::string, double> protected_entries(const Vector& estimate, const DatasetSchema& schema) {
    if (estimate.size() != static_cast<Index>(schema.columns.size())) {
        throw ArgumentError("estimate length does not match schema");
    }
    std::map<std::string, double> out;
    for (const auto& name : schema.protected_features) {
        out[name] = estimate[schema.column_index(name)];
    }
    return out;
}

} // namespace biasaudit
