#pragma once

#include "cadv/schema.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cadv {

// One row. Discrete features hold the index of their token in the schema value
// list; continuous features hold the real value (raw or normalized).
struct Observation {
    std::vector<double> values;
    std::optional<std::size_t> label;

    friend bool operator==(const Observation&, const Observation&) = default;
};

struct Dataset {
    FeatureSchema schema;
    std::vector<Observation> rows;

    const std::vector<std::string>& classes() const { return schema.classes(); }
    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

// Throws SchemaError naming the offending row/feature.
void validate_observation(const FeatureSchema& schema, const Observation& row, std::size_t row_index);

Dataset parse_csv(std::istream& in, const FeatureSchema& schema);
Dataset load_csv(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);
Dataset load_csv(const std::filesystem::path& csv_path, const FeatureSchema& schema);
void write_csv(std::ostream& out, const Dataset& data);

struct NormalizationParams {
    // One entry per feature; set for continuous features only.
    std::vector<std::optional<ValueRange>> ranges;
    // Names of constant continuous features (mapped to 0.0).
    std::vector<std::string> warnings;
};

struct NormalizedDataset {
    Dataset data;  // schema carries the ranges
    NormalizationParams params;
};

// Min-max scaling of continuous features from this dataset's own statistics.
NormalizedDataset normalize(const Dataset& data);
// Reuses previously fitted ranges (test data). Values are not clipped.
Dataset apply_normalization(const Dataset& data, const NormalizationParams& params);
// Ranges taken from the schema (written back by `normalize`).
NormalizationParams params_from_schema(const FeatureSchema& schema);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified, seeded partition of labeled rows. Per-class test counts use
// largest-remainder rounding so the total is round(n * test_fraction).
SplitIndices split_indices(const Dataset& data, double test_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);
Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

// Model-facing layout. Booleans take one 0/1 column, categoricals a one-hot
// group, continuous features a single pass-through column.
class Encoding {
public:
    struct Group {
        std::size_t first_column = 0;
        std::size_t width = 0;
        FeatureKind kind = FeatureKind::continuous;
    };

    Encoding() = default;
    explicit Encoding(const FeatureSchema& schema);

    std::size_t width() const { return width_; }
    std::size_t feature_count() const { return groups_.size(); }
    const Group& group(std::size_t feature) const { return groups_.at(feature); }
    std::size_t feature_of_column(std::size_t column) const { return column_feature_.at(column); }

    Eigen::VectorXd encode(const Observation& row) const;
    // Inverse of encode: argmax for one-hot groups, threshold 0.5 for booleans.
    Observation decode(const Eigen::VectorXd& x) const;

private:
    std::vector<Group> groups_;
    std::vector<std::size_t> column_feature_;
    std::size_t width_ = 0;
};

struct EncodedDataset {
    Eigen::MatrixXd x;  // rows are samples
    std::vector<std::size_t> labels;
};

EncodedDataset encode(const Dataset& data, const Encoding& encoding);

} // namespace cadv
