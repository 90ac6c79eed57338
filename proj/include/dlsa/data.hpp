#ifndef DLSA_DATA_HPP
#define DLSA_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dlsa/errors.hpp"
#include "dlsa/matrix.hpp"

namespace dlsa {

struct LabeledDataset {
    Matrix features;                                // N x input_dim
    std::optional<std::vector<std::size_t>> labels; // evaluation-only for targets
    std::string domain_tag;
    std::size_t num_classes = 0;

    std::size_t size() const { return features.rows(); }
    bool has_labels() const { return labels.has_value(); }
};

/// Synthetic covariate-shift task: Gaussian blobs, with the target domain
/// rotated in the first two feature dimensions and translated.
struct ShiftSpec {
    std::size_t num_classes = 3;
    std::size_t samples_per_class = 200;
    std::size_t input_dim = 8;
    double rotation_degrees = 45.0;
    Vector translation;   // length input_dim; empty means zero
    double class_std = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 1) throw ConfigError("ShiftSpec: num_classes must be >= 1");
        if (samples_per_class < 2) throw ConfigError("ShiftSpec: samples_per_class must be >= 2");
        if (input_dim < 2) throw ConfigError("ShiftSpec: input_dim must be >= 2");
        if (class_std <= 0.0) throw ConfigError("ShiftSpec: class_std must be > 0");
        if (!translation.empty() && translation.size() != input_dim)
            throw ConfigError("ShiftSpec: translation length != input_dim");
    }
};

namespace detail {

/// Axis-aligned class centers scaled so neighbors sit 4 * class_std apart.
inline Matrix class_centers(const ShiftSpec& spec) {
    Matrix centers(spec.num_classes, spec.input_dim);
    const double r = 4.0 * spec.class_std / std::numbers::sqrt2;
    for (std::size_t c = 0; c < spec.num_classes; ++c)
        centers(c, c % std::min(spec.num_classes, spec.input_dim)) = r;
    return centers;
}

inline LabeledDataset sample_blobs(const ShiftSpec& spec, const Matrix& centers,
                                   std::uint64_t seed, const std::string& tag) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spec.class_std);
    LabeledDataset ds;
    ds.domain_tag = tag;
    ds.num_classes = spec.num_classes;
    ds.features = Matrix(spec.num_classes * spec.samples_per_class, spec.input_dim);
    ds.labels = std::vector<std::size_t>(ds.features.rows());
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.num_classes; ++c)
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
            (*ds.labels)[row] = c;
            for (std::size_t j = 0; j < spec.input_dim; ++j)
                ds.features(row, j) = centers(c, j) + noise(rng);
        }
    return ds;
}

}  // namespace detail

inline std::pair<LabeledDataset, LabeledDataset> generate_shifted_pair(const ShiftSpec& spec) {
    spec.validate();
    const Matrix centers = detail::class_centers(spec);
    LabeledDataset source = detail::sample_blobs(spec, centers, spec.seed, "source");
    LabeledDataset target =
        detail::sample_blobs(spec, centers, spec.seed ^ 0x9e3779b97f4a7c15ull, "target");

    const double phi = spec.rotation_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    for (std::size_t i = 0; i < target.features.rows(); ++i) {
        const double x0 = target.features(i, 0), x1 = target.features(i, 1);
        target.features(i, 0) = c * x0 - s * x1;
        target.features(i, 1) = s * x0 + c * x1;
        if (!spec.translation.empty())
            for (std::size_t j = 0; j < spec.input_dim; ++j)
                target.features(i, j) += spec.translation[j];
    }
    return {std::move(source), std::move(target)};
}

namespace detail {

inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline bool parse_double(const std::string& tok, double& out) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end != begin && *end == '\0';
}

}  // namespace detail

/// Feature CSV: comma-separated decimal floats, optional trailing integer
/// label column, optional single header line (detected by a non-numeric
/// first token).
inline LabeledDataset load_feature_csv(const std::string& path, bool has_labels,
                                       std::size_t num_classes_override = 0) {
    std::ifstream in(path);
    if (!in) throw IoError("load_feature_csv: cannot open " + path);

    LabeledDataset ds;
    ds.domain_tag = path;
    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::size_t cols = 0, line_no = 0;
    std::string line;
    bool first_data_line = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> tokens;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) tokens.push_back(tok);

        double probe;
        if (first_data_line && !tokens.empty() && !detail::parse_double(tokens[0], probe)) {
            continue;  // header line
        }
        first_data_line = false;

        if (cols == 0) {
            cols = tokens.size();
            if (has_labels && cols < 2)
                throw ParseError("load_feature_csv: line " + std::to_string(line_no) +
                                 ": need at least one feature and a label");
        } else if (tokens.size() != cols) {
            throw ParseError("load_feature_csv: line " + std::to_string(line_no) +
                             ": expected " + std::to_string(cols) + " fields, got " +
                             std::to_string(tokens.size()));
        }

        const std::size_t feat_cols = has_labels ? cols - 1 : cols;
        for (std::size_t j = 0; j < feat_cols; ++j) {
            double v;
            if (!detail::parse_double(tokens[j], v))
                throw ParseError("load_feature_csv: line " + std::to_string(line_no) +
                                 ": bad number '" + tokens[j] + "'");
            if (!std::isfinite(v))
                throw ParseError("load_feature_csv: line " + std::to_string(line_no) +
                                 ": non-finite value");
            values.push_back(v);
        }
        if (has_labels) {
            double v;
            if (!detail::parse_double(tokens.back(), v) || v != std::floor(v) || v < 0)
                throw ParseError("load_feature_csv: line " + std::to_string(line_no) +
                                 ": bad label '" + tokens.back() + "'");
            labels.push_back(static_cast<std::size_t>(v));
        }
    }
    if (cols == 0) throw EmptyInputError("load_feature_csv: no data rows in " + path);

    const std::size_t feat_cols = has_labels ? cols - 1 : cols;
    const std::size_t rows = values.size() / feat_cols;
    ds.features = Matrix(rows, feat_cols, std::move(values));
    if (has_labels) {
        std::size_t max_label = 0;
        for (std::size_t l : labels) max_label = std::max(max_label, l);
        ds.labels = std::move(labels);
        ds.num_classes = num_classes_override ? num_classes_override : max_label + 1;
    } else {
        ds.num_classes = num_classes_override;
    }
    return ds;
}

inline void save_feature_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_feature_csv: cannot open " + path + " for writing");
    for (std::size_t i = 0; i < ds.features.rows(); ++i) {
        for (std::size_t j = 0; j < ds.features.cols(); ++j) {
            if (j) out << ',';
            out << detail::format_double(ds.features(i, j));
        }
        if (ds.labels) out << ',' << (*ds.labels)[i];
        out << '\n';
    }
    if (!out) throw IoError("save_feature_csv: write failed for " + path);
}

/// Deterministic shuffled batches. A final batch with fewer than 2 rows is
/// dropped (a least squares fit needs two points).
inline std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size,
                                                            std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed ^ epoch);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        if (end - start < 2) break;
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

inline Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(rows[i], j);
    return out;
}

}  // namespace dlsa

#endif  // DLSA_DATA_HPP
