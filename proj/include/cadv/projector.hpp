#pragma once

#include "cadv/attacks.hpp"
#include "cadv/dataset.hpp"
#include "cadv/discretizer.hpp"
#include "cadv/theory.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace cadv {

// fixed[i] holds the frozen code of feature i; nullopt marks a free feature.
struct PartialAssignment {
    std::vector<std::optional<Code>> fixed;

    std::vector<std::size_t> free_features() const;
};

// Frees the floor(phi * n / 100) features whose values satisfy the fewest
// clauses (ties to the lower index), at least one when `codes` is not certified.
PartialAssignment select_free_features(const Theory& theory, std::span<const Code> codes, double phi);

// Candidate values per feature, in the order the solver tries them; a free
// feature never takes a value outside its list. Entries for frozen features are
// ignored. An empty CandidateOrder lets every free feature take every value of
// its universe, ascending.
using CandidateOrder = std::vector<std::vector<Code>>;

// DPLL over set literals: unit propagation narrows a free feature's domain to
// the literal of the only clause position still able to satisfy a clause; a
// value lying in every open literal of its feature is fixed as pure; otherwise
// branch on the lowest free feature. Returns a full certified assignment or
// nullopt (UNSAT).
std::optional<CodeVector> dpll_solve(const Theory& theory, const PartialAssignment& partial,
                                     const CandidateOrder& candidates = {});

enum class ProjectionOutcome { already_compliant, projected, unsat_within_budget };
std::string_view to_string(ProjectionOutcome outcome);

struct ProjectionResult {
    ProjectionOutcome outcome = ProjectionOutcome::already_compliant;
    Observation repaired;                 // equals the input unless projected
    std::vector<std::size_t> changed;     // features whose value changed
    std::vector<std::size_t> freed;       // features DPLL was allowed to reassign
    bool certified_before = false;
    bool certified_after = false;
};

// Repairs `e_star` (observation space, binned schema) onto the theory. Free
// features only take values inside the source class bounds. A continuous value
// moved into another bin lands on the edge nearest its perturbed value.
ProjectionResult project(const Theory& theory, const FeatureSchema& schema, const Observation& e_star, double phi,
                         const ClassBounds& bounds, std::size_t source_class);

} // namespace cadv
