#include "biasaudit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "biasaudit/errors.hpp"
#include "biasaudit/rng.hpp"

namespace biasaudit {

namespace {

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "N/A" || s == "?" || s == "nan" || s == "NaN";
}

bool parse_number(const std::string& s, double& out) {
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end != begin && *end == '\0';
}

// One RFC-4180 record; quoted fields may contain delimiters, escaped quotes
// and newlines (multi-line fields are stitched from the stream). Lines
// starting with '#' at a record boundary are metadata stamps and skipped.
bool read_record(std::istream& in, char delim, std::vector<std::string>& fields) {
    fields.clear();
    while (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
    }
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        const char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == delim) {
            fields.push_back(field);
            field.clear();
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get();
            fields.push_back(field);
            return true;
        } else if (ch == '\n') {
            fields.push_back(field);
            return true;
        } else {
            field.push_back(ch);
        }
    }
    if (!any) return false;
    fields.push_back(field);
    return true;
}

} // namespace

void DatasetSchema::validate() const {
    if (columns.empty()) throw SchemaError("schema declares no feature columns");
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (!seen.insert(c).second) throw SchemaError("duplicate feature column '" + c + "'");
    }
    for (const auto& p : protected_features) {
        if (!seen.count(p)) throw SchemaError("protected feature '" + p + "' is not a declared column");
    }
    std::set<std::string> prot(protected_features.begin(), protected_features.end());
    if (prot.size() != protected_features.size()) throw SchemaError("duplicate protected feature");
    for (const auto* special : {&label_column, &score_column, &weight_column}) {
        if (special->has_value() && seen.count(**special)) {
            throw SchemaError("column '" + **special + "' cannot be both a feature and a label/score/weight column");
        }
    }
}

Index DatasetSchema::column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw SchemaError("unknown feature column '" + name + "'");
    return static_cast<Index>(it - columns.begin());
}

bool DatasetSchema::is_protected(const std::string& name) const {
    return std::find(protected_features.begin(), protected_features.end(), name) != protected_features.end();
}

std::vector<std::string> DatasetSchema::unprotected_features() const {
    std::vector<std::string> out;
    for (const auto& c : columns) {
        if (!is_protected(c)) out.push_back(c);
    }
    return out;
}

Vector Dataset::column(const std::string& name) const {
    return rows.col(schema.column_index(name));
}

Dataset Dataset::select(const std::vector<Index>& idx) const {
    Dataset out;
    out.schema = schema;
    out.rows.resize(static_cast<Index>(idx.size()), rows.cols());
    out.weights.resize(static_cast<Index>(idx.size()));
    if (labels) out.labels = Vector(static_cast<Index>(idx.size()));
    if (scores) out.scores = Vector(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Index r = idx[i];
        out.rows.row(static_cast<Index>(i)) = rows.row(r);
        out.weights[static_cast<Index>(i)] = weights[r];
        if (labels) (*out.labels)[static_cast<Index>(i)] = (*labels)[r];
        if (scores) (*out.scores)[static_cast<Index>(i)] = (*scores)[r];
    }
    return out;
}

Dataset load_csv(const std::string& path, const DatasetSchema& schema, const ParseOptions& options) {
    schema.validate();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");

    std::vector<std::string> header;
    if (!read_record(in, options.delimiter, header)) throw DataError("'" + path + "' is empty");

    auto find_col = [&](const std::string& name) -> Index {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("column '" + name + "' not found in '" + path + "'");
        return static_cast<Index>(it - header.begin());
    };

    std::vector<Index> feature_pos;
    feature_pos.reserve(schema.columns.size());
    for (const auto& c : schema.columns) feature_pos.push_back(find_col(c));
    const Index label_pos = schema.label_column ? find_col(*schema.label_column) : -1;
    const Index score_pos = schema.score_column ? find_col(*schema.score_column) : -1;
    const Index weight_pos = schema.weight_column ? find_col(*schema.weight_column) : -1;

    auto parse_cell = [&](const std::string& cell, const std::string& column, long row,
                          double& out) -> bool {
        if (is_missing_token(cell)) {
            if (options.drop_missing) return false;
            throw DataError("missing value at row " + std::to_string(row) + ", column '" + column + "'");
        }
        if (parse_number(cell, out)) return true;
        const auto enc = schema.encodings.find(column);
        if (enc != schema.encodings.end()) {
            const auto tok = enc->second.find(cell);
            if (tok != enc->second.end()) {
                out = tok->second;
                return true;
            }
        }
        throw ParseError("cannot parse '" + cell + "' at row " + std::to_string(row) +
                         ", column '" + column + "'");
    };

    std::vector<std::vector<double>> feature_rows;
    std::vector<double> labels, scores, weights;
    std::vector<std::string> record;
    long row_number = 1; // header was row 1
    while (read_record(in, options.delimiter, record)) {
        ++row_number;
        if (record.size() == 1 && record[0].empty()) continue; // trailing blank line
        if (record.size() < header.size()) {
            throw ParseError("row " + std::to_string(row_number) + " has " +
                             std::to_string(record.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        std::vector<double> feats(feature_pos.size());
        bool keep = true;
        for (std::size_t j = 0; j < feature_pos.size() && keep; ++j) {
            keep = parse_cell(record[static_cast<std::size_t>(feature_pos[j])], schema.columns[j],
                              row_number, feats[j]);
        }
        double label = 0, score = 0, weight = 1;
        if (keep && label_pos >= 0) {
            keep = parse_cell(record[static_cast<std::size_t>(label_pos)], *schema.label_column,
                              row_number, label);
        }
        if (keep && score_pos >= 0) {
            keep = parse_cell(record[static_cast<std::size_t>(score_pos)], *schema.score_column,
                              row_number, score);
        }
        if (keep && weight_pos >= 0) {
            keep = parse_cell(record[static_cast<std::size_t>(weight_pos)], *schema.weight_column,
                              row_number, weight);
        }
        if (!keep) continue;
        feature_rows.push_back(std::move(feats));
        if (label_pos >= 0) labels.push_back(label);
        if (score_pos >= 0) scores.push_back(score);
        weights.push_back(weight_pos >= 0 ? weight : 1.0);
    }

    if (feature_rows.empty()) throw DataError("'" + path + "' has no usable rows after filtering");

    Dataset ds;
    ds.schema = schema;
    ds.rows.resize(static_cast<Index>(feature_rows.size()), static_cast<Index>(schema.columns.size()));
    for (std::size_t i = 0; i < feature_rows.size(); ++i) {
        for (std::size_t j = 0; j < feature_rows[i].size(); ++j) {
            ds.rows(static_cast<Index>(i), static_cast<Index>(j)) = feature_rows[i][j];
        }
    }
    ds.weights = Eigen::Map<const Vector>(weights.data(), static_cast<Index>(weights.size()));
    if (label_pos >= 0) ds.labels = Eigen::Map<const Vector>(labels.data(), static_cast<Index>(labels.size()));
    if (score_pos >= 0) ds.scores = Eigen::Map<const Vector>(scores.data(), static_cast<Index>(scores.size()));

    if (ds.labels) {
        for (Index i = 0; i < ds.labels->size(); ++i) {
            const double y = (*ds.labels)[i];
            if (y != 0.0 && y != 1.0) {
                throw DataError("label column '" + *schema.label_column + "' must be binary, got " +
                                std::to_string(y));
            }
        }
    }
    for (Index i = 0; i < ds.weights.size(); ++i) {
        if (!(ds.weights[i] >= 0.0)) {
            throw DataError("weight column contains a negative or non-finite value");
        }
    }
    return ds;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (const char c : s) {
        if (c == '"') quoted += "\"\"";
        else quoted.push_back(c);
    }
    quoted += "\"";
    return quoted;
}

std::string format_value(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    std::vector<std::string> header = ds.schema.columns;
    if (ds.labels) header.push_back(ds.schema.label_column.value_or("label"));
    if (ds.scores) header.push_back(ds.schema.score_column.value_or("score"));
    header.push_back(ds.schema.weight_column.value_or("weight"));
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << (i ? "," : "") << csv_field(header[i]);
    }
    out << "\n";
    for (Index r = 0; r < ds.row_count(); ++r) {
        for (Index c = 0; c < ds.feature_count(); ++c) {
            out << (c ? "," : "") << format_value(ds.rows(r, c));
        }
        if (ds.labels) out << "," << format_value((*ds.labels)[r]);
        if (ds.scores) out << "," << format_value((*ds.scores)[r]);
        out << "," << format_value(ds.weights[r]) << "\n";
    }
}

std::pair<Dataset, std::vector<ColumnScale>> normalize(const Dataset& ds) {
    if (!ds.rows.allFinite()) throw DataError("dataset contains NaN or infinite feature values");
    std::vector<ColumnScale> scalers(static_cast<std::size_t>(ds.feature_count()));
    for (Index c = 0; c < ds.feature_count(); ++c) {
        scalers[static_cast<std::size_t>(c)] = {ds.rows.col(c).minCoeff(), ds.rows.col(c).maxCoeff()};
    }
    return {apply_scalers(ds, scalers), scalers};
}

Dataset apply_scalers(const Dataset& ds, const std::vector<ColumnScale>& scalers) {
    if (static_cast<Index>(scalers.size()) != ds.feature_count()) {
        throw ArgumentError("scaler count does not match feature count");
    }
    Dataset out = ds;
    for (Index c = 0; c < ds.feature_count(); ++c) {
        const auto& s = scalers[static_cast<std::size_t>(c)];
        out.rows.col(c) = ds.rows.col(c).unaryExpr([&s](double x) { return s.apply(x); });
    }
    return out;
}

std::vector<Index> FoldPlan::fold_indices(int fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) out.push_back(static_cast<Index>(i));
    }
    return out;
}

std::vector<Index> FoldPlan::complement_indices(int fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) out.push_back(static_cast<Index>(i));
    }
    return out;
}

FoldPlan make_folds(Index m, int k, std::uint64_t seed) {
    if (k < 2) throw ArgumentError("fold count must be at least 2");
    if (m < k) throw ArgumentError("cannot split " + std::to_string(m) + " rows into " +
                                   std::to_string(k) + " folds");
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(seed);
    rng.shuffle(order);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(static_cast<std::size_t>(m), 0);
    // First m % k folds take one extra row.
    const Index base = m / k;
    const Index extra = m % k;
    Index pos = 0;
    for (int f = 0; f < k; ++f) {
        const Index size = base + (f < extra ? 1 : 0);
        for (Index i = 0; i < size; ++i) {
            plan.assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])] = f;
        }
    }
    return plan;
}

std::vector<std::string> missing_protected_coverage(const Dataset& ds) {
    std::vector<std::string> missing;
    for (const auto& name : ds.schema.protected_features) {
        const Vector col = ds.column(name);
        bool two = false;
        for (Index i = 1; i < col.size() && !two; ++i) {
            two = col[i] != col[0];
        }
        if (!two) missing.push_back(name);
    }
    return missing;
}

namespace {

Index smallest_prime_factor(Index m) {
    for (Index d = 2; d * d <= m; ++d) {
        if (m % d == 0) return d;
    }
    return m;
}

} // namespace

Dataset generate_synthetic(Index sample_count, std::uint64_t seed) {
    if (sample_count < 8) throw ArgumentError("synthetic sample count must be at least 8");
    const Index q = smallest_prime_factor(sample_count);
    if (q == sample_count) {
        throw ArgumentError("synthetic sample count " + std::to_string(sample_count) +
                            " is an odd prime; no layout keeps the fair feature exactly fair");
    }
    const Index blocks = sample_count / q;
    const Index positives_per_block = q / 2;

    Dataset ds;
    ds.schema.columns = {"biased", "fair", "random"};
    ds.schema.protected_features = {"biased", "fair"};
    ds.schema.label_column = "label";
    ds.rows.resize(sample_count, 3);
    ds.labels = Vector(sample_count);
    ds.weights = Vector::Ones(sample_count);

    Rng rng(seed);
    Index r = 0;
    for (Index b = 0; b < blocks; ++b) {
        const double fair = (b % 2 == 0) ? 1.0 : 0.0;
        for (Index i = 0; i < q; ++i, ++r) {
            const double label = i < positives_per_block ? 1.0 : 0.0;
            ds.rows(r, 0) = label; // biased tracks the label exactly
            ds.rows(r, 1) = fair;
            ds.rows(r, 2) = static_cast<double>(rng.coin());
            (*ds.labels)[r] = label;
        }
    }
    return ds;
}

} // namespace biasaudit
