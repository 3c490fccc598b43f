#pragma once

#include "cadv/discretizer.hpp"
#include "cadv/schema.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cadv {

// How the cardinality bound k limits literal sizes.
//   at_most: every size 1..k (the full bounded pseudo-power set).
//   exactly: only size k. Features with fewer than k+1 values use their largest
//            proper size |X_i|-1. Rejects exactly the same observations as
//            at_most for the same k; produces the per-level theories of the
//            nesting argument.
enum class CardinalityMode { at_most, exactly };

struct SpaceOptions {
    std::size_t k = 1;
    CardinalityMode mode = CardinalityMode::at_most;
    double clause_cap = 5e7;
};

// A conjunction of set-literal clauses. Each clause holds one literal per
// feature; literal i is a bitmask over feature i's value universe, stored in
// ceil(|X_i| / 64) words. Clauses live back to back in one flat word array.
class Theory {
public:
    Theory() = default;
    Theory(std::vector<std::uint32_t> universe, std::size_t k, CardinalityMode mode, std::uint64_t fingerprint);

    std::size_t feature_count() const { return universe_.size(); }
    std::size_t clause_count() const { return stride_ == 0 ? 0 : words_.size() / stride_; }
    bool empty() const { return clause_count() == 0; }
    std::size_t k() const { return k_; }
    CardinalityMode mode() const { return mode_; }
    std::uint64_t fingerprint() const { return fingerprint_; }
    const std::vector<std::uint32_t>& universe() const { return universe_; }

    bool contains(std::size_t clause, std::size_t feature, Code value) const {
        if (value >= universe_[feature]) return false;
        const auto w = words_[clause * stride_ + offset_[feature] + value / 64];
        return ((w >> (value % 64)) & 1U) != 0;
    }
    bool satisfied(std::size_t clause, std::span<const Code> codes) const;

    // Admissible values of one literal, ascending.
    std::vector<Code> literal(std::size_t clause, std::size_t feature) const;
    std::vector<std::vector<Code>> clause_literals(std::size_t clause) const;

    // Appends a clause given as one admissible set per feature.
    void add_clause(const std::vector<std::vector<Code>>& literals);
    // Appends one clause in packed form (stride() words).
    void append_clause_words(std::span<const std::uint64_t> words);

    std::size_t stride() const { return stride_; }
    std::span<const std::uint64_t> clause_words(std::size_t clause) const {
        return {words_.data() + clause * stride_, stride_};
    }
    std::span<const std::uint64_t> words() const { return words_; }
    std::size_t word_offset(std::size_t feature) const { return offset_[feature]; }

    // Same clause set regardless of order.
    bool same_clauses(const Theory& other) const;

private:
    friend Theory generate_space_range(std::span<const std::uint32_t>, const SpaceOptions&, std::uint64_t,
                                       std::size_t, std::size_t);
    friend Theory valiant_filter(const Theory&, std::span<const CodeVector>, std::size_t);
    friend Theory load_theory(std::istream&);

    std::vector<std::uint32_t> universe_;
    std::vector<std::size_t> offset_;
    std::size_t stride_ = 0;
    std::size_t k_ = 1;
    CardinalityMode mode_ = CardinalityMode::at_most;
    std::uint64_t fingerprint_ = 0;
    std::vector<std::uint64_t> words_;
};

// prod_i sum_j C(|X_i|, j) over the literal sizes the options allow.
double estimate_space(std::span<const std::uint32_t> universe, const SpaceOptions& options);

// The whole clause space (throws CapacityError above options.clause_cap).
Theory generate_space(const FeatureSchema& schema, const SpaceOptions& options);
Theory generate_space(std::span<const std::uint32_t> universe, const SpaceOptions& options,
                      std::uint64_t fingerprint = 0);
// Clauses [begin, end) of the space, in generation order (feature 0 varies slowest).
Theory generate_space_range(std::span<const std::uint32_t> universe, const SpaceOptions& options,
                            std::uint64_t fingerprint, std::size_t begin, std::size_t end);

// Keeps exactly the clauses every observation satisfies.
Theory valiant_filter(const Theory& theory, std::span<const CodeVector> observations, std::size_t threads = 1);

// generate_space + valiant_filter streamed in chunks, so memory follows the
// surviving clauses rather than the whole space.
Theory learn_theory(const FeatureSchema& schema, const SpaceOptions& options, std::span<const CodeVector> observations,
                    std::size_t threads = 1, std::size_t chunk = 1U << 20);
Theory learn_theory(std::span<const std::uint32_t> universe, const SpaceOptions& options,
                    std::span<const CodeVector> observations, std::uint64_t fingerprint = 0,
                    std::size_t threads = 1, std::size_t chunk = 1U << 20);

bool certifies(const Theory& theory, std::span<const Code> codes);

// count[i] = number of clauses whose literal on feature i contains codes[i].
std::vector<std::size_t> clause_satisfaction_counts(const Theory& theory, std::span<const Code> codes);
std::size_t satisfied_clause_count(const Theory& theory, std::span<const Code> codes);

// Binary format: magic "CADVTHRY", format version, schema fingerprint, k, mode,
// universe sizes, clause count, packed little-endian literal words.
void save_theory(const Theory& theory, std::ostream& out);
void save_theory(const Theory& theory, const std::filesystem::path& path);
Theory load_theory(std::istream& in);
Theory load_theory(const std::filesystem::path& path);

// "(proto ∈ {0} ∨ service ∈ {B,C}) ∧ ..." one clause per line. Without a schema
// features print as x1..xn and values as codes.
std::string theory_to_text(const Theory& theory, const FeatureSchema* schema = nullptr);

} // namespace cadv
