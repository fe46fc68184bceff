#include "biasaudit/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

#include <csignal>
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "biasaudit/errors.hpp"

namespace biasaudit {

namespace {

double gini(double positives, double total) {
    if (total <= 0) return 0.0;
    const double p = positives / total;
    return 2.0 * p * (1.0 - p);
}

} // namespace

DecisionTree DecisionTree::train(const Dataset& ds, const TreeConfig& config) {
    if (!ds.labels) throw ArgumentError("tree training requires labels");
    const Index m = ds.row_count();
    if (m < 2) throw ArgumentError("tree training requires at least 2 samples");
    const Vector& y = *ds.labels;
    const Vector& w = ds.weights;

    DecisionTree tree;
    tree.n_features_ = ds.feature_count();

    struct Task {
        std::vector<Index> samples;
        Index node;
        Index depth;
    };

    std::vector<Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), Index{0});

    tree.nodes_.emplace_back();
    std::vector<Task> stack;
    stack.push_back({std::move(all), 0, 0});

    while (!stack.empty()) {
        Task task = std::move(stack.back());
        stack.pop_back();
        const auto& samples = task.samples;

        double total_w = 0.0, total_p = 0.0;
        bool pure = true;
        for (const Index i : samples) {
            total_w += w[i];
            total_p += w[i] * y[i];
            pure = pure && y[i] == y[samples.front()];
        }
        Node& node = tree.nodes_[static_cast<std::size_t>(task.node)];
        node.value = total_w > 0 ? total_p / total_w : 0.0;

        const bool depth_capped = config.max_depth >= 0 && task.depth >= config.max_depth;
        if (pure || static_cast<Index>(samples.size()) < config.min_samples_split || depth_capped) {
            continue;
        }

        // Best split: highest impurity decrease, strictly-better replacement
        // with features and thresholds scanned in ascending order, so the
        // lowest feature index / lowest threshold wins ties.
        const double parent_gini = gini(total_p, total_w);
        double best_gain = -1.0;
        Index best_feature = -1;
        double best_threshold = 0.0;

        std::vector<Index> order(samples);
        for (Index f = 0; f < tree.n_features_; ++f) {
            std::sort(order.begin(), order.end(), [&](Index a, Index b) {
                const double va = ds.rows(a, f), vb = ds.rows(b, f);
                return va != vb ? va < vb : a < b;
            });
            double left_w = 0.0, left_p = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                const Index s = order[i];
                left_w += w[s];
                left_p += w[s] * y[s];
                const double v = ds.rows(s, f);
                const double next = ds.rows(order[i + 1], f);
                if (v == next) continue;
                const double threshold = v + (next - v) / 2.0;
                const double right_w = total_w - left_w;
                const double right_p = total_p - left_p;
                const double children = (left_w * gini(left_p, left_w) + right_w * gini(right_p, right_w)) / total_w;
                const double gain = std::max(0.0, parent_gini - children);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = threshold;
                }
            }
        }

        if (best_feature < 0) continue; // all feature vectors identical

        std::vector<Index> left, right;
        for (const Index i : samples) {
            (ds.rows(i, best_feature) <= best_threshold ? left : right).push_back(i);
        }

        const Index left_id = static_cast<Index>(tree.nodes_.size());
        const Index right_id = left_id + 1;
        tree.nodes_.emplace_back();
        tree.nodes_.emplace_back(); // may reallocate: re-take the parent reference
        Node& parent = tree.nodes_[static_cast<std::size_t>(task.node)];
        parent.feature = best_feature;
        parent.threshold = best_threshold;
        parent.left = left_id;
        parent.right = right_id;
        stack.push_back({std::move(right), right_id, task.depth + 1});
        stack.push_back({std::move(left), left_id, task.depth + 1});
    }
    return tree;
}

Vector DecisionTree::predict_batch(const Matrix& rows) const {
    if (rows.cols() != n_features_) {
        throw ArgumentError("predict: expected " + std::to_string(n_features_) + " features, got " +
                            std::to_string(rows.cols()));
    }
    Vector out(rows.rows());
    for (Index r = 0; r < rows.rows(); ++r) {
        Index at = 0;
        while (nodes_[static_cast<std::size_t>(at)].feature >= 0) {
            const Node& n = nodes_[static_cast<std::size_t>(at)];
            at = rows(r, n.feature) <= n.threshold ? n.left : n.right;
        }
        out[r] = nodes_[static_cast<std::size_t>(at)].value;
    }
    return out;
}

Index DecisionTree::depth() const {
    // Iterative depth over the node array; children always follow parents.
    std::vector<Index> depth(nodes_.size(), 0);
    Index max_depth = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.feature >= 0) {
            depth[static_cast<std::size_t>(n.left)] = depth[i] + 1;
            depth[static_cast<std::size_t>(n.right)] = depth[i] + 1;
            max_depth = std::max(max_depth, depth[i] + 1);
        }
    }
    return max_depth;
}

std::string DecisionTree::to_json() const {
    nlohmann::json j;
    j["format"] = "decision-tree";
    j["version"] = 1;
    j["n_features"] = n_features_;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const Node& n : nodes_) {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"value", n.value}});
    }
    return j.dump(2);
}

DecisionTree DecisionTree::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "decision-tree") throw ParseError("not a decision-tree document");
    if (j.value("version", 0) != 1) throw ParseError("unsupported decision-tree version");
    DecisionTree tree;
    tree.n_features_ = j.at("n_features").get<Index>();
    for (const auto& n : j.at("nodes")) {
        Node node;
        node.feature = n.at("feature").get<Index>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<Index>();
        node.right = n.at("right").get<Index>();
        node.value = n.at("value").get<double>();
        tree.nodes_.push_back(node);
    }
    if (tree.nodes_.empty()) throw ParseError("decision-tree document has no nodes");
    return tree;
}

ExternalModel::ExternalModel(std::string command, std::string exchange_dir, double timeout_seconds,
                             Index n_features)
    : command_(std::move(command)),
      exchange_dir_(std::move(exchange_dir)),
      timeout_seconds_(timeout_seconds),
      n_features_(n_features) {}

namespace {

std::mutex external_mutex;
std::atomic<unsigned long> external_counter{0};

void substitute(std::string& s, const std::string& key, const std::string& value) {
    for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
        s.replace(pos, key.size(), value);
    }
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

Vector ExternalModel::predict_batch(const Matrix& rows) const {
    if (rows.cols() != n_features_) {
        throw ArgumentError("external model: expected " + std::to_string(n_features_) +
                            " features, got " + std::to_string(rows.cols()));
    }
    std::lock_guard<std::mutex> lock(external_mutex); // child calls are serialized

    const unsigned long id = external_counter++;
    const std::string stem = exchange_dir_ + "/model_" + std::to_string(getpid()) + "_" + std::to_string(id);
    const std::string request = stem + "_request.csv";
    const std::string response = stem + "_response.txt";
    const std::string errpath = stem + "_stderr.txt";

    {
        std::ofstream req(request, std::ios::binary);
        if (!req) throw AdapterError("cannot write request file '" + request + "'");
        req.precision(17);
        for (Index r = 0; r < rows.rows(); ++r) {
            for (Index c = 0; c < rows.cols(); ++c) {
                req << (c ? "," : "") << rows(r, c);
            }
            req << "\n";
        }
    }

    std::string cmd = command_;
    const bool has_placeholders =
        cmd.find("{request}") != std::string::npos || cmd.find("{response}") != std::string::npos;
    substitute(cmd, "{request}", request);
    substitute(cmd, "{response}", response);
    if (!has_placeholders) cmd += " '" + request + "' '" + response + "'";

    const pid_t pid = fork();
    if (pid < 0) throw AdapterError("fork failed");
    if (pid == 0) {
        setpgid(0, 0);
        const int err = open(errpath.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (err >= 0) {
            dup2(err, 2);
            close(err);
        }
        execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }

    auto fail = [&](const std::string& what) -> AdapterError {
        std::string stderr_text = slurp(errpath);
        if (!stderr_text.empty()) {
            if (stderr_text.size() > 4096) stderr_text.resize(4096);
            return AdapterError(what + "; child stderr: " + stderr_text);
        }
        return AdapterError(what);
    };

    int status = 0;
    const long budget_ms = static_cast<long>(timeout_seconds_ * 1000.0);
    long waited_ms = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw fail("waitpid failed for external model");
        if (budget_ms > 0 && waited_ms >= budget_ms) {
            kill(-pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw fail("external model timed out after " + std::to_string(timeout_seconds_) + "s");
        }
        usleep(1000);
        waited_ms += 1;
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw fail("external model exited with status " +
                   std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    }

    std::ifstream resp(response, std::ios::binary);
    if (!resp) throw fail("external model produced no response file");
    std::vector<double> values;
    std::string line;
    while (std::getline(resp, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || *end != '\0' || !(v >= 0.0 && v <= 1.0)) {
            throw fail("malformed outcome line '" + line + "' in external model response");
        }
        values.push_back(v);
    }
    if (static_cast<Index>(values.size()) != rows.rows()) {
        throw fail("external model returned " + std::to_string(values.size()) + " outcomes for " +
                   std::to_string(rows.rows()) + " rows");
    }

    std::remove(request.c_str());
    std::remove(response.c_str());
    std::remove(errpath.c_str());
    return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

Vector RescaledPredictor::predict_batch(const Matrix& rows) const {
    if (static_cast<std::size_t>(rows.cols()) != scalers_.size()) {
        throw ArgumentError("rescaled predictor: feature count mismatch");
    }
    Matrix raw = rows;
    for (Index c = 0; c < raw.cols(); ++c) {
        const auto& s = scalers_[static_cast<std::size_t>(c)];
        raw.col(c) = rows.col(c).unaryExpr([&s](double y) { return s.invert(y); });
    }
    return base_->predict_batch(raw);
}

Vector PrecomputedPredictor::predict_batch(const Matrix& rows) const {
    if (rows.cols() != n_features_) {
        throw ArgumentError("predictions file: feature count mismatch");
    }
    if (rows.rows() != outcomes_.size()) {
        throw ArgumentError("predictions file covers " + std::to_string(outcomes_.size()) +
                            " rows, asked for " + std::to_string(rows.rows()) +
                            "; fixed predictions cannot answer other queries");
    }
    return outcomes_;
}

PrecomputedPredictor PrecomputedPredictor::from_file(const std::string& path, Index n_features) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open predictions file '" + path + "'");
    std::vector<double> values;
    std::string line;
    long row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || *end != '\0' || !(v >= 0.0 && v <= 1.0)) {
            throw ParseError("predictions file line " + std::to_string(row) +
                             ": expected an outcome in [0,1], got '" + line + "'");
        }
        values.push_back(v);
    }
    if (values.empty()) throw DataError("predictions file '" + path + "' is empty");
    return PrecomputedPredictor(Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())),
                                n_features);
}

} // namespace biasaudit
