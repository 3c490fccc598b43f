#pragma once

#include "cadv/discretizer.hpp"
#include "cadv/schema.hpp"
#include "cadv/theory.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cadv {

inline constexpr double kDefaultEnumerationCap = 1e6;

// Every code vector of the domain, feature 0 varying slowest. Throws
// CapacityError when prod |X_i| exceeds `cap`.
std::vector<CodeVector> enumerate_domain(std::span<const std::uint32_t> universe, double cap = kDefaultEnumerationCap);

struct RejectSet {
    std::vector<CodeVector> rejected;  // in enumeration order
    std::size_t domain_size = 0;

    std::size_t accepted_count() const { return domain_size - rejected.size(); }
};

RejectSet reject_set(const Theory& theory, double cap = kDefaultEnumerationCap, std::size_t threads = 1);
// Same, after checking the theory was learned under `schema`.
RejectSet reject_set(const Theory& theory, const FeatureSchema& schema, double cap = kDefaultEnumerationCap);

std::vector<CodeVector> accepted_set(const Theory& theory, double cap = kDefaultEnumerationCap);

struct NestingReport {
    std::vector<std::size_t> k;
    std::vector<std::size_t> clause_counts;
    std::vector<std::size_t> reject_sizes;
    bool holds = true;
    // First observation in psi_k but not in psi_{k+1}, with that k.
    std::optional<CodeVector> counterexample;
    std::size_t failed_k = 0;

    std::string to_json() const;
};

// Learns T_1..T_kmax from the observations and checks psi_k ⊆ psi_{k+1}.
NestingReport check_nesting(std::span<const std::uint32_t> universe, std::span<const CodeVector> observations,
                            std::size_t k_max, CardinalityMode mode = CardinalityMode::at_most,
                            double cap = kDefaultEnumerationCap);
NestingReport check_nesting(const FeatureSchema& schema, std::span<const CodeVector> observations, std::size_t k_max,
                            CardinalityMode mode = CardinalityMode::at_most);

// With k = max |X_i| - 1 the learned theory accepts exactly the distinct
// observations. Requires every |X_i| >= 2.
std::size_t memorization_k(std::span<const std::uint32_t> universe);
bool check_memorization(std::span<const std::uint32_t> universe, std::span<const CodeVector> observations,
                        double cap = kDefaultEnumerationCap);
bool check_memorization(const FeatureSchema& schema, std::span<const CodeVector> observations);

enum class ConstraintKind { exclusive, inclusive, prohibitive };
std::string_view to_string(ConstraintKind kind);

struct ValueConstraint {
    Code value = 0;                // value of feature_b
    std::vector<Code> partners;    // values of feature_a it can co-occur with
    ConstraintKind kind = ConstraintKind::prohibitive;
};

// For each value y of feature_b: the values x of feature_a such that some
// certified observation has a = x and b = y (other features free).
std::vector<ValueConstraint> classify_constraints(const Theory& theory, std::size_t feature_a, std::size_t feature_b);

} // namespace cadv
