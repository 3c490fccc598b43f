#include "cadv/discretizer.hpp"

#include "cadv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace cadv {

namespace {

// Distance to the min_pts-th nearest point (self included) for every point.
std::vector<double> core_distances_1d(std::span<const double> points, std::size_t min_pts) {
    const std::size_t n = points.size();
    std::vector<std::size_t> sorted(n);
    std::iota(sorted.begin(), sorted.end(), std::size_t{0});
    std::stable_sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return points[a] < points[b]; });

    std::vector<double> core(n, 0.0);
    const std::size_t neighbours = min_pts - 1;
    for (std::size_t p = 0; p < n; ++p) {
        const double x = points[sorted[p]];
        std::size_t lo = p;  // window [lo, hi] in sorted order
        std::size_t hi = p;
        double dist = 0.0;
        for (std::size_t k = 0; k < neighbours; ++k) {
            const bool can_left = lo > 0;
            const bool can_right = hi + 1 < n;
            const double dl = can_left ? x - points[sorted[lo - 1]] : INFINITY;
            const double dr = can_right ? points[sorted[hi + 1]] - x : INFINITY;
            if (dl <= dr) {
                --lo;
                dist = dl;
            } else {
                ++hi;
                dist = dr;
            }
        }
        core[sorted[p]] = dist;
    }
    return core;
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

OpticsOrdering optics_order(std::span<const double> points, std::size_t min_pts) {
    if (min_pts < 2) throw ValidationError("optics: min_pts must be at least 2");
    if (points.size() < min_pts)
        throw ValidationError("optics: " + std::to_string(points.size()) + " points but min_pts = " +
                              std::to_string(min_pts) + "; raise the subsampling fraction or lower min_pts");

    const std::size_t n = points.size();
    OpticsOrdering out;
    out.core_distance = core_distances_1d(points, min_pts);
    out.reachability.assign(n, INFINITY);
    out.order.reserve(n);

    std::vector<char> processed(n, 0);
    std::size_t current = 0;
    for (std::size_t step = 0; step < n; ++step) {
        processed[current] = 1;
        out.order.push_back(current);
        const double core = out.core_distance[current];
        const double x = points[current];
        std::size_t next = n;
        double best = INFINITY;
        for (std::size_t o = 0; o < n; ++o) {
            if (processed[o]) continue;
            const double r = std::max(core, std::abs(points[o] - x));
            if (r < out.reachability[o]) out.reachability[o] = r;
            if (next == n || out.reachability[o] < best) {
                best = out.reachability[o];
                next = o;
            }
        }
        if (next == n) break;
        current = next;
    }
    return out;
}

BinSet extract_bins(const OpticsOrdering& ordering, std::span<const double> points, const BinExtraction& options) {
    const std::size_t n = ordering.order.size();
    if (n == 0 || n != points.size()) throw ValidationError("extract_bins: ordering does not match the points");

    std::vector<double> finite;
    finite.reserve(n);
    for (std::size_t p = 1; p < n; ++p) {
        double r = ordering.reachability[ordering.order[p]];
        if (std::isfinite(r)) finite.push_back(r);
    }
    const double threshold = quantile(finite, options.threshold_quantile);

    // Median finite reachability of up to `local_window` ordering positions on
    // one side of p; NaN when that side has none.
    const std::size_t w = std::max<std::size_t>(1, options.local_window);
    auto side_median = [&](std::size_t from, std::size_t to) {
        std::vector<double> vals;
        for (std::size_t q = std::max<std::size_t>(from, 1); q < to; ++q) {
            double r = ordering.reachability[ordering.order[q]];
            if (std::isfinite(r)) vals.push_back(r);
        }
        return vals.empty() ? std::numeric_limits<double>::quiet_NaN() : quantile(vals, 0.5);
    };
    auto is_gap = [&](std::size_t p, double r) {
        if (!(r > threshold)) return false;
        const double left = side_median(p >= w ? p - w : 0, p);
        const double right = side_median(p + 1, std::min(n, p + 1 + w));
        double local = std::isnan(left) ? right : std::isnan(right) ? left : std::max(left, right);
        if (std::isnan(local)) return true;
        return r > options.min_gap_ratio * local;
    };

    std::vector<Bin> ranges;
    double lo = points[ordering.order[0]];
    double hi = lo;
    auto close_cluster = [&] { ranges.push_back({lo, std::nextafter(hi, INFINITY)}); };
    for (std::size_t p = 1; p < n; ++p) {
        const std::size_t idx = ordering.order[p];
        const double r = ordering.reachability[idx];
        if (is_gap(p, r)) {
            close_cluster();
            lo = hi = points[idx];
        } else {
            lo = std::min(lo, points[idx]);
            hi = std::max(hi, points[idx]);
        }
    }
    close_cluster();

    std::sort(ranges.begin(), ranges.end(), [](const Bin& a, const Bin& b) { return a.lo < b.lo; });
    BinSet out;
    out.open_ends = options.open_ends;
    for (const auto& b : ranges) {
        if (!out.ranges.empty() && b.lo < out.ranges.back().hi) {
            out.ranges.back().hi = std::max(out.ranges.back().hi, b.hi);
        } else {
            out.ranges.push_back(b);
        }
    }
    return out;
}

Code assign_bin(double value, const BinSet& bins) {
    const auto& r = bins.ranges;
    if (r.empty()) return kNoBin;
    if (bins.open_ends) {
        if (value < r.front().lo) return 0;
        if (value >= r.back().hi) return static_cast<Code>(r.size() - 1);
    }
    auto it = std::upper_bound(r.begin(), r.end(), value, [](double v, const Bin& b) { return v < b.lo; });
    if (it == r.begin()) return kNoBin;
    --it;
    return it->contains(value) ? static_cast<Code>(it - r.begin()) : kNoBin;
}

BinSet discretize_values(std::span<const double> values, const DiscretizerConfig& config) {
    if (!(config.subsample > 0.0 && config.subsample <= 1.0))
        throw ValidationError("discretize: subsample fraction must lie in (0, 1]");
    if (config.subsample >= 1.0) {
        auto ordering = optics_order(values, config.min_pts);
        return extract_bins(ordering, values, config.extraction);
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(config.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto keep = static_cast<std::size_t>(std::round(config.subsample * static_cast<double>(values.size())));
    keep = std::max(keep, std::min(config.min_pts, values.size()));
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    std::vector<double> sample;
    sample.reserve(keep);
    for (auto i : idx) sample.push_back(values[i]);
    auto ordering = optics_order(sample, config.min_pts);
    return extract_bins(ordering, sample, config.extraction);
}

FeatureSchema discretize(const Dataset& data, const DiscretizerConfig& config) {
    FeatureSchema schema = data.schema;
    std::vector<double> column(data.rows.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema.feature(i).discrete()) continue;
        for (std::size_t r = 0; r < data.rows.size(); ++r) column[r] = data.rows[r].values[i];
        DiscretizerConfig per_feature = config;
        per_feature.seed = config.seed + i;
        schema.set_bins(i, discretize_values(column, per_feature));
    }
    return schema;
}

CodeVector to_codes(const FeatureSchema& schema, const Observation& row) {
    if (row.values.size() != schema.size()) throw ValidationError("to_codes: observation width mismatch");
    CodeVector codes(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema.feature(i);
        if (f.discrete()) {
            codes[i] = static_cast<Code>(row.values[i]);
        } else {
            if (!f.bins) throw ValidationError("to_codes: feature '" + f.name + "' has no bins");
            codes[i] = assign_bin(row.values[i], *f.bins);
        }
    }
    return codes;
}

std::vector<CodeVector> to_codes(const Dataset& data) {
    std::vector<CodeVector> out;
    out.reserve(data.rows.size());
    for (const auto& row : data.rows) out.push_back(to_codes(data.schema, row));
    return out;
}

} // namespace cadv
