#pragma once

#include "cadv/dataset.hpp"
#include "cadv/schema.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace cadv {

// Discrete code of one feature value: the value index for discrete features,
// the bin index for continuous ones.
using Code = std::uint32_t;
using CodeVector = std::vector<Code>;

// Continuous value that falls between bins (or outside strict bins). No learned
// literal contains it.
inline constexpr Code kNoBin = std::numeric_limits<Code>::max();

struct OpticsOrdering {
    std::vector<std::size_t> order;
    std::vector<double> reachability;  // indexed by point; +inf for order[0]
    std::vector<double> core_distance;  // indexed by point
};

// OPTICS with eps = infinity on 1-D data. Core distance is the distance to the
// min_pts-th nearest point counting the point itself. Ties in the seed queue go
// to the lowest point index.
OpticsOrdering optics_order(std::span<const double> points, std::size_t min_pts);

struct BinExtraction {
    double threshold_quantile = 0.95;
    // A boundary also needs reachability above this multiple of the local
    // median reachability (the larger of the medians over `local_window`
    // ordering positions on either side). Keeps evenly dense data, dense or
    // sparse, in one bin.
    double min_gap_ratio = 10.0;
    std::size_t local_window = 10;
    bool open_ends = false;
};

BinSet extract_bins(const OpticsOrdering& ordering, std::span<const double> points, const BinExtraction& options = {});

// Binary search over the ranges; kNoBin for gap or (strict) out-of-range values.
Code assign_bin(double value, const BinSet& bins);

struct DiscretizerConfig {
    std::size_t min_pts = 5;
    BinExtraction extraction;
    double subsample = 1.0;  // fraction of rows fed to OPTICS
    std::uint64_t seed = 0;
};

// Bins for one feature's values, with optional seeded subsampling.
BinSet discretize_values(std::span<const double> values, const DiscretizerConfig& config);

// Bins every continuous feature of `data` and returns the schema with bins set.
FeatureSchema discretize(const Dataset& data, const DiscretizerConfig& config);

// Per-feature codes of an observation under a finalized schema.
CodeVector to_codes(const FeatureSchema& schema, const Observation& row);
std::vector<CodeVector> to_codes(const Dataset& data);

} // namespace cadv
