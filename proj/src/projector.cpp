#include "cadv/projector.hpp"

#include "cadv/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace cadv {

std::vector<std::size_t> PartialAssignment::free_features() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (!fixed[i]) out.push_back(i);
    return out;
}

PartialAssignment select_free_features(const Theory& theory, std::span<const Code> codes, double phi) {
    if (!(phi > 0.0 && phi <= 100.0)) throw ValidationError("projection budget phi must be in (0, 100]");
    const std::size_t n = codes.size();
    if (n != theory.feature_count()) throw ValidationError("observation width does not match the theory");
    const auto counts = clause_satisfaction_counts(theory, codes);
    std::size_t budget = static_cast<std::size_t>(std::floor(phi * static_cast<double>(n) / 100.0 + 1e-9));
    if (!certifies(theory, codes)) budget = std::max<std::size_t>(budget, 1);
    budget = std::min(budget, n);

    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });

    PartialAssignment p;
    p.fixed.assign(codes.begin(), codes.end());
    for (std::size_t i = 0; i < budget; ++i) p.fixed[rank[i]].reset();
    return p;
}

namespace {

// Free-feature domains share the clause word layout, so a literal test is a
// masked AND over the feature's words.
struct SearchState {
    std::vector<std::optional<Code>> value;
    std::vector<std::uint64_t> domain;
};

class Dpll {
public:
    Dpll(const Theory& theory, CandidateOrder order) : t_(theory), order_(std::move(order)) {
        const std::size_t n = t_.feature_count();
        width_.resize(n);
        for (std::size_t f = 0; f < n; ++f)
            width_[f] = (f + 1 < n ? t_.word_offset(f + 1) : t_.stride()) - t_.word_offset(f);
    }

    std::optional<CodeVector> solve(SearchState state) {
        if (!search(state)) return std::nullopt;
        CodeVector out;
        for (const auto& v : result_) out.push_back(*v);
        return out;
    }

private:
    bool intersects(std::size_t clause, std::size_t f, const SearchState& s) const {
        const auto w = t_.clause_words(clause);
        for (std::size_t i = 0; i < width_[f]; ++i)
            if (w[t_.word_offset(f) + i] & s.domain[t_.word_offset(f) + i]) return true;
        return false;
    }

    bool in_domain(const SearchState& s, std::size_t f, Code v) const {
        return v < t_.universe()[f] && ((s.domain[t_.word_offset(f) + v / 64] >> (v % 64)) & 1U) != 0;
    }

    std::size_t domain_size(const SearchState& s, std::size_t f) const {
        std::size_t total = 0;
        for (std::size_t i = 0; i < width_[f]; ++i) total += static_cast<std::size_t>(std::popcount(s.domain[t_.word_offset(f) + i]));
        return total;
    }

    void assign(SearchState& s, std::size_t f, Code v) const {
        s.value[f] = v;
        for (std::size_t i = 0; i < width_[f]; ++i) s.domain[t_.word_offset(f) + i] = 0;
    }

    bool clause_satisfied(std::size_t c, const SearchState& s) const {
        for (std::size_t f = 0; f < t_.feature_count(); ++f)
            if (s.value[f] && t_.contains(c, f, *s.value[f])) return true;
        return false;
    }

    // Unit propagation plus pure-value fixing to a fixpoint; false on conflict.
    bool propagate(SearchState& s) const {
        const std::size_t n = t_.feature_count();
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t c = 0; c < t_.clause_count(); ++c) {
                if (clause_satisfied(c, s)) continue;
                std::size_t open = n, open_count = 0;
                for (std::size_t f = 0; f < n && open_count < 2; ++f)
                    if (!s.value[f] && intersects(c, f, s)) {
                        open = f;
                        ++open_count;
                    }
                if (open_count == 0) return false;
                if (open_count == 1) {
                    const auto w = t_.clause_words(c);
                    const std::size_t before = domain_size(s, open);
                    for (std::size_t i = 0; i < width_[open]; ++i) s.domain[t_.word_offset(open) + i] &= w[t_.word_offset(open) + i];
                    const std::size_t after = domain_size(s, open);
                    if (after == 1) {
                        assign(s, open, first_in_domain(s, open));
                        changed = true;
                    } else if (after != before) {
                        changed = true;
                    }
                }
            }
            if (changed) continue;
            for (std::size_t f = 0; f < n && !changed; ++f) {
                if (s.value[f]) continue;
                for (Code v : order_[f]) {
                    if (!in_domain(s, f, v)) continue;
                    bool pure = true;
                    for (std::size_t c = 0; c < t_.clause_count() && pure; ++c)
                        if (!t_.contains(c, f, v) && intersects(c, f, s) && !clause_satisfied(c, s)) pure = false;
                    if (pure) {
                        assign(s, f, v);
                        changed = true;
                        break;
                    }
                }
            }
        }
        return true;
    }

    Code first_in_domain(const SearchState& s, std::size_t f) const {
        for (std::size_t i = 0; i < width_[f]; ++i)
            if (const auto w = s.domain[t_.word_offset(f) + i]; w != 0)
                return static_cast<Code>(i * 64 + static_cast<std::size_t>(std::countr_zero(w)));
        return kNoBin;
    }

    bool search(SearchState& s) {
        if (!propagate(s)) return false;
        std::size_t branch = t_.feature_count();
        for (std::size_t f = 0; f < t_.feature_count(); ++f)
            if (!s.value[f]) {
                if (domain_size(s, f) == 0) return false;
                if (branch == t_.feature_count()) branch = f;
            }
        if (branch == t_.feature_count()) {
            for (std::size_t c = 0; c < t_.clause_count(); ++c)
                if (!clause_satisfied(c, s)) return false;
            result_ = s.value;
            return true;
        }
        for (Code v : order_[branch]) {
            if (!in_domain(s, branch, v)) continue;
            SearchState next = s;
            assign(next, branch, v);
            if (search(next)) return true;
        }
        return false;
    }

    const Theory& t_;
    CandidateOrder order_;
    std::vector<std::size_t> width_;
    std::vector<std::optional<Code>> result_;
};

} // namespace

std::optional<CodeVector> dpll_solve(const Theory& theory, const PartialAssignment& partial,
                                     const CandidateOrder& candidates) {
    const std::size_t n = theory.feature_count();
    if (partial.fixed.size() != n) throw ValidationError("partial assignment width does not match the theory");
    if (!candidates.empty() && candidates.size() != n) throw ValidationError("candidate order needs one entry per feature");

    CandidateOrder order(n);
    SearchState state;
    state.value = partial.fixed;
    state.domain.assign(theory.stride(), 0);
    for (std::size_t f = 0; f < n; ++f) {
        if (partial.fixed[f]) continue;
        if (candidates.empty()) {
            order[f].resize(theory.universe()[f]);
            std::iota(order[f].begin(), order[f].end(), Code{0});
        } else {
            for (Code v : candidates[f])
                if (v < theory.universe()[f] && std::find(order[f].begin(), order[f].end(), v) == order[f].end())
                    order[f].push_back(v);
        }
        for (Code v : order[f]) state.domain[theory.word_offset(f) + v / 64] |= std::uint64_t{1} << (v % 64);
    }
    return Dpll(theory, std::move(order)).solve(std::move(state));
}

std::string_view to_string(ProjectionOutcome outcome) {
    switch (outcome) {
    case ProjectionOutcome::already_compliant: return "already_compliant";
    case ProjectionOutcome::projected: return "projected";
    case ProjectionOutcome::unsat_within_budget: return "unsat_within_budget";
    }
    return "unknown";
}

ProjectionResult project(const Theory& theory, const FeatureSchema& schema, const Observation& e_star, double phi,
                         const ClassBounds& bounds, std::size_t source_class) {
    if (schema.fingerprint() != theory.fingerprint() && theory.fingerprint() != 0)
        throw ValidationError("theory was learned under a different schema");
    const CodeVector codes = to_codes(schema, e_star);
    ProjectionResult result;
    result.repaired = e_star;
    result.certified_before = certifies(theory, codes);
    if (result.certified_before) {
        result.certified_after = true;
        return result;
    }

    const PartialAssignment partial = select_free_features(theory, codes, phi);
    result.freed = partial.free_features();

    CandidateOrder order(schema.size());
    for (std::size_t f : result.freed) {
        const auto& feat = schema.feature(f);
        const auto& b = bounds.at(source_class, f);
        if (feat.discrete()) {
            const auto original = static_cast<Code>(e_star.values[f]);
            if (original < b.allowed.size() && b.allowed[original]) order[f].push_back(original);
            for (Code v = 0; v < b.allowed.size(); ++v)
                if (b.allowed[v] && v != original) order[f].push_back(v);
            continue;
        }
        const auto& ranges = feat.bins->ranges;
        const double raw = e_star.values[f];
        std::vector<std::pair<double, Code>> eligible;
        for (Code v = 0; v < ranges.size(); ++v) {
            const auto& bin = ranges[v];
            if (bin.lo > b.hi || bin.hi <= b.lo) continue;
            double dist = raw < bin.lo ? bin.lo - raw : raw >= bin.hi ? raw - bin.hi : 0.0;
            if (v == codes[f]) dist = -1.0;  // the perturbed value's own bin goes first
            eligible.emplace_back(dist, v);
        }
        std::stable_sort(eligible.begin(), eligible.end(),
                         [](const auto& a, const auto& c) { return a.first < c.first; });
        for (const auto& e : eligible) order[f].push_back(e.second);
    }

    const auto solution = dpll_solve(theory, partial, order);
    if (!solution) {
        result.outcome = ProjectionOutcome::unsat_within_budget;
        return result;
    }

    result.outcome = ProjectionOutcome::projected;
    for (std::size_t f : result.freed) {
        const Code v = (*solution)[f];
        if (v == codes[f]) continue;
        const auto& feat = schema.feature(f);
        if (feat.discrete()) {
            result.repaired.values[f] = static_cast<double>(v);
        } else {
            const auto& bin = feat.bins->ranges[v];
            const auto& b = bounds.at(source_class, f);
            const double raw = e_star.values[f];
            double moved = raw >= bin.hi ? std::nextafter(bin.hi, -std::numeric_limits<double>::infinity())
                           : raw < bin.lo ? bin.lo
                                          : raw;
            result.repaired.values[f] = std::clamp(moved, b.lo, b.hi);
        }
        result.changed.push_back(f);
    }
    result.certified_after = certifies(theory, to_codes(schema, result.repaired));
    return result;
}

} // namespace cadv
