#include "cadv/discretizer.hpp"
#include "cadv/error.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace cadv;

namespace {

// Distance to the min_pts-th nearest point, self included, by sorting all distances.
double brute_core(const std::vector<double>& pts, std::size_t i, std::size_t min_pts) {
    std::vector<double> d;
    for (double p : pts) d.push_back(std::abs(p - pts[i]));
    std::sort(d.begin(), d.end());
    return d[min_pts - 1];
}

std::vector<double> clustered(std::mt19937_64& rng, const std::vector<double>& centers, std::size_t per,
                              double half_width) {
    std::vector<double> out;
    for (double c : centers) {
        std::uniform_real_distribution<double> u(c - half_width, c + half_width);
        for (std::size_t i = 0; i < per; ++i) out.push_back(u(rng));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

// Single-linkage components with radius eps on sorted 1-D data (DBSCAN with
// min_pts = 1), returned as [min, max] per component.
std::vector<std::pair<double, double>> components(std::vector<double> pts, double eps) {
    std::sort(pts.begin(), pts.end());
    std::vector<std::pair<double, double>> out{{pts[0], pts[0]}};
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (pts[i] - pts[i - 1] > eps) out.push_back({pts[i], pts[i]});
        else out.back().second = pts[i];
    }
    return out;
}

} // namespace

TEST_CASE("optics core distances and reachabilities match the definitions") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pts = clustered(rng, {0.1, 0.45, 0.8}, 15, 0.03);
        const std::size_t min_pts = 2 + trial % 5;
        const auto ord = optics_order(pts, min_pts);
        REQUIRE(ord.order.size() == pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) CHECK(ord.core_distance[i] == brute_core(pts, i, min_pts));
        CHECK(std::isinf(ord.reachability[ord.order[0]]));
        std::vector<char> done(pts.size(), 0);
        done[ord.order[0]] = 1;
        for (std::size_t p = 1; p < ord.order.size(); ++p) {
            // reach(o) = min over earlier points q of max(core(q), |q - o|),
            // and o is the unprocessed point with the smallest such value.
            auto reach_of = [&](std::size_t o) {
                double best = INFINITY;
                for (std::size_t q = 0; q < pts.size(); ++q)
                    if (done[q]) best = std::min(best, std::max(ord.core_distance[q], std::abs(pts[q] - pts[o])));
                return best;
            };
            const std::size_t o = ord.order[p];
            const double r = reach_of(o);
            CHECK(ord.reachability[o] == r);
            for (std::size_t q = 0; q < pts.size(); ++q)
                if (!done[q]) CHECK(reach_of(q) >= r);
            done[o] = 1;
        }
    }
}

TEST_CASE("bins agree with single-linkage components on well-separated clusters") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t count = 2 + trial % 5;
        std::vector<double> centers;
        for (std::size_t c = 0; c < count; ++c) centers.push_back((c + 0.5) / static_cast<double>(count));
        const auto pts = clustered(rng, centers, 60, 0.2 / static_cast<double>(count * 4));
        const auto bins = discretize_values(pts, DiscretizerConfig{});
        const auto comps = components(pts, 0.5 / static_cast<double>(count * 4));
        REQUIRE(comps.size() == count);
        REQUIRE(bins.size() == count);
        for (std::size_t b = 0; b < count; ++b) {
            CHECK(bins.ranges[b].lo == comps[b].first);
            CHECK(bins.ranges[b].hi == std::nextafter(comps[b].second, INFINITY));
        }
        for (double p : pts) CHECK(assign_bin(p, bins) != kNoBin);
    }
}

TEST_CASE("evenly spread data stays in one bin") {
    std::vector<double> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(i / 199.0);
    const auto bins = discretize_values(pts, DiscretizerConfig{});
    REQUIRE(bins.size() == 1);
    CHECK(bins.ranges[0].lo == 0.0);
    CHECK(assign_bin(1.0, bins) == 0u);
}

TEST_CASE("assign_bin handles gaps, strict and open ends") {
    BinSet bins{{{0.0, 0.25}, {0.5, 0.75}}, false};
    CHECK(assign_bin(0.0, bins) == 0u);
    CHECK(assign_bin(0.2499, bins) == 0u);
    CHECK(assign_bin(0.25, bins) == kNoBin);
    CHECK(assign_bin(0.6, bins) == 1u);
    CHECK(assign_bin(0.75, bins) == kNoBin);
    CHECK(assign_bin(-0.1, bins) == kNoBin);
    bins.open_ends = true;
    CHECK(assign_bin(-0.1, bins) == 0u);
    CHECK(assign_bin(9.0, bins) == 1u);
    CHECK(assign_bin(0.3, bins) == kNoBin);
    CHECK(assign_bin(0.3, BinSet{}) == kNoBin);
}

TEST_CASE("subsampled discretization is seeded") {
    std::mt19937_64 rng(5);
    const auto pts = clustered(rng, {0.2, 0.8}, 500, 0.02);
    DiscretizerConfig cfg;
    cfg.subsample = 0.1;
    cfg.seed = 9;
    const auto a = discretize_values(pts, cfg);
    const auto b = discretize_values(pts, cfg);
    CHECK(a == b);
    CHECK(a.size() == 2);
}

TEST_CASE("discretizer preconditions") {
    std::vector<double> few{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(optics_order(few, 5), ValidationError);
    CHECK_THROWS_AS(optics_order(few, 1), ValidationError);
    DiscretizerConfig cfg;
    cfg.subsample = 0.0;
    CHECK_THROWS_AS(discretize_values(few, cfg), ValidationError);
}

TEST_CASE("discretize sets bins on continuous features only and to_codes uses them") {
    FeatureSchema schema({testutil::boolean("b"), testutil::continuous("c")}, {"x"});
    Dataset d{schema, {}};
    std::mt19937_64 rng(1);
    const auto pts = clustered(rng, {0.1, 0.9}, 40, 0.02);
    for (std::size_t i = 0; i < pts.size(); ++i) d.rows.push_back({{double(i % 2), pts[i]}, 0});
    const auto binned = discretize(d, DiscretizerConfig{});
    CHECK(binned.finalized());
    CHECK_FALSE(binned.feature(0).bins.has_value());
    CHECK(binned.universe_sizes() == std::vector<std::uint32_t>{2, 2});
    const auto codes = to_codes(binned, {{1.0, 0.9}, 0});
    CHECK(codes == CodeVector{1, 1});
    CHECK_THROWS_AS(to_codes(schema, {{1.0, 0.5}, 0}), ValidationError);
}
