#include "cadv/analysis.hpp"

#include "cadv/error.hpp"
#include "cadv/parallel.hpp"
#include "cadv/projector.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace cadv {

namespace {

double domain_size(std::span<const std::uint32_t> universe) {
    double total = 1.0;
    for (auto u : universe) total *= static_cast<double>(u);
    return total;
}

void check_cap(std::span<const std::uint32_t> universe, double cap) {
    const double size = domain_size(universe);
    if (size > cap) {
        std::ostringstream msg;
        msg << "domain of " << size << " observations exceeds the enumeration cap of " << cap;
        throw CapacityError(msg.str());
    }
}

CodeVector decode_index(std::span<const std::uint32_t> universe, std::size_t index) {
    CodeVector codes(universe.size());
    for (std::size_t f = universe.size(); f-- > 0;) {
        codes[f] = static_cast<Code>(index % universe[f]);
        index /= universe[f];
    }
    return codes;
}

std::set<CodeVector> as_set(const std::vector<CodeVector>& v) { return {v.begin(), v.end()}; }

} // namespace

std::vector<CodeVector> enumerate_domain(std::span<const std::uint32_t> universe, double cap) {
    check_cap(universe, cap);
    const auto total = static_cast<std::size_t>(domain_size(universe));
    std::vector<CodeVector> out;
    out.reserve(total);
    for (std::size_t i = 0; i < total; ++i) out.push_back(decode_index(universe, i));
    return out;
}

RejectSet reject_set(const Theory& theory, double cap, std::size_t threads) {
    const auto& universe = theory.universe();
    check_cap(universe, cap);
    const auto total = static_cast<std::size_t>(domain_size(universe));
    std::vector<char> rejected(total, 0);
    parallel_for(total, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) rejected[i] = certifies(theory, decode_index(universe, i)) ? 0 : 1;
    });
    RejectSet out;
    out.domain_size = total;
    for (std::size_t i = 0; i < total; ++i)
        if (rejected[i]) out.rejected.push_back(decode_index(universe, i));
    return out;
}

RejectSet reject_set(const Theory& theory, const FeatureSchema& schema, double cap) {
    if (theory.fingerprint() != schema.fingerprint()) throw ValidationError("theory was learned under a different schema");
    return reject_set(theory, cap);
}

std::vector<CodeVector> accepted_set(const Theory& theory, double cap) {
    const auto all = enumerate_domain(theory.universe(), cap);
    std::vector<CodeVector> out;
    for (const auto& o : all)
        if (certifies(theory, o)) out.push_back(o);
    return out;
}

std::string NestingReport::to_json() const {
    nlohmann::json j;
    j["k"] = k;
    j["clause_counts"] = clause_counts;
    j["reject_sizes"] = reject_sizes;
    j["nesting_holds"] = holds;
    if (counterexample) {
        j["counterexample"] = *counterexample;
        j["failed_k"] = failed_k;
    }
    return j.dump(2);
}

NestingReport check_nesting(std::span<const std::uint32_t> universe, std::span<const CodeVector> observations,
                            std::size_t k_max, CardinalityMode mode, double cap) {
    if (k_max < 1) throw ValidationError("k_max must be at least 1");
    check_cap(universe, cap);
    NestingReport report;
    std::vector<std::set<CodeVector>> psi;
    for (std::size_t k = 1; k <= k_max; ++k) {
        SpaceOptions options;
        options.k = k;
        options.mode = mode;
        const Theory t = learn_theory(universe, options, observations);
        const RejectSet r = reject_set(t, cap);
        report.k.push_back(k);
        report.clause_counts.push_back(t.clause_count());
        report.reject_sizes.push_back(r.rejected.size());
        psi.push_back(as_set(r.rejected));
    }
    for (std::size_t i = 0; i + 1 < psi.size() && report.holds; ++i)
        for (const auto& o : psi[i])
            if (!psi[i + 1].count(o)) {
                report.holds = false;
                report.counterexample = o;
                report.failed_k = report.k[i];
                break;
            }
    return report;
}

NestingReport check_nesting(const FeatureSchema& schema, std::span<const CodeVector> observations, std::size_t k_max,
                            CardinalityMode mode) {
    const auto universe = schema.universe_sizes();
    return check_nesting(universe, observations, k_max, mode);
}

std::size_t memorization_k(std::span<const std::uint32_t> universe) {
    if (universe.empty()) throw ValidationError("memorization needs at least one feature");
    for (auto u : universe)
        if (u < 2) throw ValidationError("memorization needs every feature to have at least two values");
    return *std::max_element(universe.begin(), universe.end()) - 1;
}

bool check_memorization(std::span<const std::uint32_t> universe, std::span<const CodeVector> observations, double cap) {
    check_cap(universe, cap);
    SpaceOptions options;
    options.k = memorization_k(universe);
    const Theory t = learn_theory(universe, options, observations);
    const std::set<CodeVector> distinct(observations.begin(), observations.end());
    return as_set(accepted_set(t, cap)) == distinct;
}

bool check_memorization(const FeatureSchema& schema, std::span<const CodeVector> observations) {
    const auto universe = schema.universe_sizes();
    return check_memorization(universe, observations);
}

std::string_view to_string(ConstraintKind kind) {
    switch (kind) {
    case ConstraintKind::exclusive: return "exclusive";
    case ConstraintKind::inclusive: return "inclusive";
    case ConstraintKind::prohibitive: return "prohibitive";
    }
    return "unknown";
}

std::vector<ValueConstraint> classify_constraints(const Theory& theory, std::size_t feature_a, std::size_t feature_b) {
    const std::size_t n = theory.feature_count();
    if (feature_a >= n || feature_b >= n || feature_a == feature_b)
        throw ValidationError("classify_constraints needs two distinct feature indices");
    std::vector<ValueConstraint> out;
    for (Code y = 0; y < theory.universe()[feature_b]; ++y) {
        ValueConstraint vc;
        vc.value = y;
        for (Code x = 0; x < theory.universe()[feature_a]; ++x) {
            PartialAssignment p;
            p.fixed.assign(n, std::nullopt);
            p.fixed[feature_a] = x;
            p.fixed[feature_b] = y;
            if (dpll_solve(theory, p)) vc.partners.push_back(x);
        }
        vc.kind = vc.partners.empty()       ? ConstraintKind::prohibitive
                  : vc.partners.size() == 1 ? ConstraintKind::exclusive
                                            : ConstraintKind::inclusive;
        out.push_back(std::move(vc));
    }
    return out;
}

} // namespace cadv
