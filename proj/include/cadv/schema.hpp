#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cadv {

enum class FeatureKind { boolean, categorical, continuous };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

// Half-open range [lo, hi).
struct Bin {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return lo <= v && v < hi; }
    friend bool operator==(const Bin&, const Bin&) = default;
};

// Sorted, disjoint ranges for one continuous feature. With open_ends set the
// first and last range also absorb values below/above the covered span.
struct BinSet {
    std::vector<Bin> ranges;
    bool open_ends = false;

    std::size_t size() const { return ranges.size(); }
    bool empty() const { return ranges.empty(); }
    friend bool operator==(const BinSet&, const BinSet&) = default;
};

// Train-split minimum and maximum used for min-max scaling.
struct ValueRange {
    double min = 0.0;
    double max = 0.0;
    friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

struct Feature {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    std::vector<std::string> values;  // discrete kinds only
    std::optional<BinSet> bins;       // continuous, after discretization
    std::optional<ValueRange> range;  // continuous, after normalization

    bool discrete() const { return kind != FeatureKind::continuous; }
    std::optional<std::size_t> value_index(std::string_view token) const;

    // Size of the value universe: value count for discrete features, bin count
    // for discretized continuous features, 0 for continuous features without bins.
    std::uint32_t universe_size() const;

    friend bool operator==(const Feature&, const Feature&) = default;
};

class FeatureSchema {
public:
    FeatureSchema() = default;
    FeatureSchema(std::vector<Feature> features, std::vector<std::string> classes);

    const std::vector<Feature>& features() const { return features_; }
    const Feature& feature(std::size_t i) const { return features_.at(i); }
    std::size_t size() const { return features_.size(); }

    const std::vector<std::string>& classes() const { return classes_; }
    std::size_t class_count() const { return classes_.size(); }
    std::optional<std::size_t> class_index(std::string_view name) const;
    std::optional<std::size_t> feature_index(std::string_view name) const;

    // True once every continuous feature carries bins.
    bool finalized() const;
    std::vector<std::uint32_t> universe_sizes() const;

    void set_bins(std::size_t feature, BinSet bins);
    void set_range(std::size_t feature, ValueRange range);

    // FNV-1a over names, kinds, value sets and bin edges. Artifacts derived from
    // one schema (theories, reports) carry it to detect mismatches.
    std::uint64_t fingerprint() const;

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

private:
    std::vector<Feature> features_;
    std::vector<std::string> classes_;
};

FeatureSchema parse_schema_json(std::string_view text);
std::string schema_to_json(const FeatureSchema& schema);
FeatureSchema load_schema(const std::filesystem::path& path);
void save_schema(const FeatureSchema& schema, const std::filesystem::path& path);

} // namespace cadv
