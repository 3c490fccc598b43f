#pragma once

#include "cadv/dataset.hpp"
#include "cadv/discretizer.hpp"
#include "cadv/schema.hpp"
#include "cadv/theory.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testutil {

inline cadv::Feature discrete(std::string name, std::vector<std::string> values) {
    cadv::Feature f;
    f.name = std::move(name);
    f.kind = cadv::FeatureKind::categorical;
    f.values = std::move(values);
    return f;
}

inline cadv::Feature boolean(std::string name) {
    cadv::Feature f;
    f.name = std::move(name);
    f.kind = cadv::FeatureKind::boolean;
    f.values = {"0", "1"};
    return f;
}

inline cadv::Feature continuous(std::string name) {
    cadv::Feature f;
    f.name = std::move(name);
    f.kind = cadv::FeatureKind::continuous;
    return f;
}

// Clause as readable sets, for comparing against displayed theories.
using Literals = std::vector<std::vector<cadv::Code>>;

inline std::set<Literals> clause_set(const cadv::Theory& t) {
    std::set<Literals> out;
    for (std::size_t c = 0; c < t.clause_count(); ++c) out.insert(t.clause_literals(c));
    return out;
}

// Every code vector of the domain, by brute-force recursion.
inline void all_codes(const std::vector<std::uint32_t>& universe, std::vector<cadv::CodeVector>& out,
                      cadv::CodeVector& cur, std::size_t f = 0) {
    if (f == universe.size()) {
        out.push_back(cur);
        return;
    }
    for (cadv::Code v = 0; v < universe[f]; ++v) {
        cur[f] = v;
        all_codes(universe, out, cur, f + 1);
    }
}

inline std::vector<cadv::CodeVector> all_codes(const std::vector<std::uint32_t>& universe) {
    std::vector<cadv::CodeVector> out;
    cadv::CodeVector cur(universe.size());
    all_codes(universe, out, cur);
    return out;
}

// Clause satisfaction written out directly from the literal sets.
inline bool oracle_certifies(const cadv::Theory& t, const cadv::CodeVector& codes) {
    for (std::size_t c = 0; c < t.clause_count(); ++c) {
        const auto lits = t.clause_literals(c);
        bool sat = false;
        for (std::size_t f = 0; f < lits.size(); ++f)
            if (std::find(lits[f].begin(), lits[f].end(), codes[f]) != lits[f].end()) sat = true;
        if (!sat) return false;
    }
    return true;
}

inline std::vector<std::uint32_t> random_universe(std::mt19937_64& rng, std::size_t max_features, std::uint32_t min_values,
                                                  std::uint32_t max_values) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, max_features)(rng);
    std::vector<std::uint32_t> u(n);
    for (auto& x : u) x = std::uniform_int_distribution<std::uint32_t>(min_values, max_values)(rng);
    return u;
}

inline std::vector<cadv::CodeVector> random_observations(std::mt19937_64& rng, const std::vector<std::uint32_t>& universe,
                                                         std::size_t count) {
    std::vector<cadv::CodeVector> out(count, cadv::CodeVector(universe.size()));
    for (auto& o : out)
        for (std::size_t f = 0; f < universe.size(); ++f)
            o[f] = std::uniform_int_distribution<cadv::Code>(0, universe[f] - 1)(rng);
    return out;
}

} // namespace testutil
