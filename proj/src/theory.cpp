#include "cadv/theory.hpp"

#include "cadv/error.hpp"
#include "cadv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace cadv {

namespace {

std::size_t words_for(std::uint32_t universe) { return (static_cast<std::size_t>(universe) + 63) / 64; }

// Literal sizes allowed for a feature with `universe` values. Empty when the
// feature has a single value: its pseudo-power set is empty, so it contributes
// an always-false literal.
std::vector<std::size_t> literal_sizes(std::uint32_t universe, const SpaceOptions& options) {
    if (universe < 2) return {};
    const std::size_t largest = std::min<std::size_t>(options.k, universe - 1);
    if (options.mode == CardinalityMode::exactly) return {largest};
    std::vector<std::size_t> sizes;
    for (std::size_t s = 1; s <= largest; ++s) sizes.push_back(s);
    return sizes;
}

double binomial(std::uint32_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(r);
}

// All literal masks of one feature: by size, then lexicographic combinations.
std::vector<std::vector<std::uint64_t>> literal_masks(std::uint32_t universe, const SpaceOptions& options) {
    const std::size_t width = words_for(universe);
    std::vector<std::vector<std::uint64_t>> masks;
    auto sizes = literal_sizes(universe, options);
    if (sizes.empty()) {
        masks.emplace_back(width, 0);
        return masks;
    }
    for (std::size_t size : sizes) {
        std::vector<std::uint32_t> combo(size);
        for (std::size_t i = 0; i < size; ++i) combo[i] = static_cast<std::uint32_t>(i);
        while (true) {
            std::vector<std::uint64_t> mask(width, 0);
            for (auto v : combo) mask[v / 64] |= std::uint64_t{1} << (v % 64);
            masks.push_back(std::move(mask));
            // advance to the next combination
            std::size_t i = size;
            while (i > 0 && combo[i - 1] == universe - size + i - 1) --i;
            if (i == 0) break;
            ++combo[i - 1];
            for (std::size_t j = i; j < size; ++j) combo[j] = combo[j - 1] + 1;
        }
    }
    return masks;
}

void check_codes(const Theory& theory, std::span<const Code> codes) {
    if (codes.size() != theory.feature_count())
        throw ValidationError("observation has " + std::to_string(codes.size()) + " codes, theory expects " +
                              std::to_string(theory.feature_count()));
}

} // namespace

Theory::Theory(std::vector<std::uint32_t> universe, std::size_t k, CardinalityMode mode, std::uint64_t fingerprint)
    : universe_(std::move(universe)), k_(k), mode_(mode), fingerprint_(fingerprint) {
    offset_.reserve(universe_.size());
    for (auto u : universe_) {
        offset_.push_back(stride_);
        stride_ += std::max<std::size_t>(1, words_for(u));
    }
}

bool Theory::satisfied(std::size_t clause, std::span<const Code> codes) const {
    for (std::size_t f = 0; f < universe_.size(); ++f)
        if (contains(clause, f, codes[f])) return true;
    return false;
}

std::vector<Code> Theory::literal(std::size_t clause, std::size_t feature) const {
    std::vector<Code> out;
    for (Code v = 0; v < universe_[feature]; ++v)
        if (contains(clause, feature, v)) out.push_back(v);
    return out;
}

std::vector<std::vector<Code>> Theory::clause_literals(std::size_t clause) const {
    std::vector<std::vector<Code>> out;
    out.reserve(universe_.size());
    for (std::size_t f = 0; f < universe_.size(); ++f) out.push_back(literal(clause, f));
    return out;
}

void Theory::add_clause(const std::vector<std::vector<Code>>& literals) {
    if (literals.size() != universe_.size()) throw ValidationError("clause needs one literal per feature");
    const std::size_t base = words_.size();
    words_.resize(base + stride_, 0);
    for (std::size_t f = 0; f < literals.size(); ++f) {
        for (Code v : literals[f]) {
            if (v >= universe_[f]) throw ValidationError("literal value outside the feature universe");
            words_[base + offset_[f] + v / 64] |= std::uint64_t{1} << (v % 64);
        }
    }
}

void Theory::append_clause_words(std::span<const std::uint64_t> words) {
    if (words.size() != stride_) throw ValidationError("packed clause has the wrong width");
    words_.insert(words_.end(), words.begin(), words.end());
}

bool Theory::same_clauses(const Theory& other) const {
    if (universe_ != other.universe_ || clause_count() != other.clause_count()) return false;
    auto collect = [](const Theory& t) {
        std::set<std::vector<std::uint64_t>> s;
        for (std::size_t c = 0; c < t.clause_count(); ++c) {
            auto w = t.clause_words(c);
            s.emplace(w.begin(), w.end());
        }
        return s;
    };
    return collect(*this) == collect(other);
}

double estimate_space(std::span<const std::uint32_t> universe, const SpaceOptions& options) {
    double total = 1.0;
    for (auto u : universe) {
        auto sizes = literal_sizes(u, options);
        double count = sizes.empty() ? 1.0 : 0.0;
        for (auto s : sizes) count += binomial(u, s);
        total *= count;
    }
    return total;
}

namespace {

void check_options(std::span<const std::uint32_t> universe, const SpaceOptions& options) {
    if (options.k < 1) throw ValidationError("cardinality bound k must be at least 1");
    if (universe.empty()) throw ValidationError("clause space over zero features");
    const double estimate = estimate_space(universe, options);
    if (estimate > options.clause_cap) {
        std::ostringstream msg;
        msg << "clause space estimate " << estimate << " exceeds the cap of " << options.clause_cap
            << " clauses; lower k or reduce feature cardinalities";
        throw CapacityError(msg.str());
    }
}

} // namespace

Theory generate_space_range(std::span<const std::uint32_t> universe, const SpaceOptions& options,
                            std::uint64_t fingerprint, std::size_t begin, std::size_t end) {
    Theory t({universe.begin(), universe.end()}, options.k, options.mode, fingerprint);
    const std::size_t n = universe.size();
    std::vector<std::vector<std::vector<std::uint64_t>>> masks(n);
    for (std::size_t f = 0; f < n; ++f) masks[f] = literal_masks(universe[f], options);
    if (end <= begin) return t;

    // mixed-radix digits of `begin`, feature 0 most significant
    std::vector<std::size_t> digit(n, 0);
    std::size_t rest = begin;
    for (std::size_t f = n; f-- > 0;) {
        digit[f] = rest % masks[f].size();
        rest /= masks[f].size();
    }

    t.words_.resize((end - begin) * t.stride_, 0);
    for (std::size_t c = 0; c < end - begin; ++c) {
        std::uint64_t* dst = t.words_.data() + c * t.stride_;
        for (std::size_t f = 0; f < n; ++f) {
            const auto& m = masks[f][digit[f]];
            std::copy(m.begin(), m.end(), dst + t.offset_[f]);
        }
        for (std::size_t f = n; f-- > 0;) {
            if (++digit[f] < masks[f].size()) break;
            digit[f] = 0;
        }
    }
    return t;
}

Theory generate_space(std::span<const std::uint32_t> universe, const SpaceOptions& options, std::uint64_t fingerprint) {
    check_options(universe, options);
    const auto total = static_cast<std::size_t>(estimate_space(universe, options));
    return generate_space_range(universe, options, fingerprint, 0, total);
}

Theory generate_space(const FeatureSchema& schema, const SpaceOptions& options) {
    auto universe = schema.universe_sizes();
    return generate_space(universe, options, schema.fingerprint());
}

Theory valiant_filter(const Theory& theory, std::span<const CodeVector> observations, std::size_t threads) {
    const std::size_t n = theory.feature_count();
    const std::size_t clauses = theory.clause_count();
    const std::size_t stride = theory.stride_;

    // Per observation: word offset and bit of each feature value; invalid codes
    // (kNoBin, out of universe) point at a bit no literal sets.
    std::vector<std::size_t> word_at(observations.size() * n);
    std::vector<std::uint64_t> bit_at(observations.size() * n);
    for (std::size_t e = 0; e < observations.size(); ++e) {
        check_codes(theory, observations[e]);
        for (std::size_t f = 0; f < n; ++f) {
            const Code v = observations[e][f];
            const bool valid = v < theory.universe_[f];
            word_at[e * n + f] = theory.offset_[f] + (valid ? v / 64 : 0);
            bit_at[e * n + f] = valid ? std::uint64_t{1} << (v % 64) : 0;
        }
    }

    std::vector<char> alive(clauses, 1);
    constexpr std::size_t kBlock = 4096;
    parallel_for(clauses, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t block = lo; block < hi; block += kBlock) {
            const std::size_t block_end = std::min(hi, block + kBlock);
            for (std::size_t e = 0; e < observations.size(); ++e) {
                const std::size_t* wa = &word_at[e * n];
                const std::uint64_t* ba = &bit_at[e * n];
                for (std::size_t c = block; c < block_end; ++c) {
                    if (!alive[c]) continue;
                    const std::uint64_t* w = theory.words_.data() + c * stride;
                    bool sat = false;
                    for (std::size_t f = 0; f < n && !sat; ++f) sat = (w[wa[f]] & ba[f]) != 0;
                    if (!sat) alive[c] = 0;
                }
            }
        }
    });

    Theory out(theory.universe_, theory.k_, theory.mode_, theory.fingerprint_);
    out.words_.reserve(static_cast<std::size_t>(std::count(alive.begin(), alive.end(), 1)) * stride);
    for (std::size_t c = 0; c < clauses; ++c)
        if (alive[c]) out.words_.insert(out.words_.end(), theory.words_.begin() + static_cast<std::ptrdiff_t>(c * stride),
                                        theory.words_.begin() + static_cast<std::ptrdiff_t>((c + 1) * stride));
    return out;
}

Theory learn_theory(std::span<const std::uint32_t> universe, const SpaceOptions& options,
                    std::span<const CodeVector> observations, std::uint64_t fingerprint, std::size_t threads,
                    std::size_t chunk) {
    check_options(universe, options);
    const auto total = static_cast<std::size_t>(estimate_space(universe, options));
    chunk = std::max<std::size_t>(1, chunk);
    Theory learned({universe.begin(), universe.end()}, options.k, options.mode, fingerprint);
    for (std::size_t begin = 0; begin < total; begin += chunk) {
        Theory space = generate_space_range(universe, options, fingerprint, begin, std::min(total, begin + chunk));
        Theory kept = valiant_filter(space, observations, threads);
        for (std::size_t c = 0; c < kept.clause_count(); ++c) {
            auto w = kept.clause_words(c);
            learned.append_clause_words(w);
        }
    }
    return learned;
}

Theory learn_theory(const FeatureSchema& schema, const SpaceOptions& options, std::span<const CodeVector> observations,
                    std::size_t threads, std::size_t chunk) {
    auto universe = schema.universe_sizes();
    return learn_theory(universe, options, observations, schema.fingerprint(), threads, chunk);
}

bool certifies(const Theory& theory, std::span<const Code> codes) {
    check_codes(theory, codes);
    for (std::size_t c = 0; c < theory.clause_count(); ++c)
        if (!theory.satisfied(c, codes)) return false;
    return true;
}

std::vector<std::size_t> clause_satisfaction_counts(const Theory& theory, std::span<const Code> codes) {
    check_codes(theory, codes);
    std::vector<std::size_t> counts(theory.feature_count(), 0);
    for (std::size_t c = 0; c < theory.clause_count(); ++c)
        for (std::size_t f = 0; f < theory.feature_count(); ++f)
            if (theory.contains(c, f, codes[f])) ++counts[f];
    return counts;
}

std::size_t satisfied_clause_count(const Theory& theory, std::span<const Code> codes) {
    check_codes(theory, codes);
    std::size_t count = 0;
    for (std::size_t c = 0; c < theory.clause_count(); ++c)
        if (theory.satisfied(c, codes)) ++count;
    return count;
}

namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'V', 'T', 'H', 'R', 'Y'};
constexpr std::uint8_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("theory file truncated");
    return v;
}

} // namespace

void save_theory(const Theory& theory, std::ostream& out) {
    out.write(kMagic, sizeof kMagic);
    put<std::uint8_t>(out, kFormatVersion);
    put<std::uint64_t>(out, theory.fingerprint());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(theory.k()));
    put<std::uint8_t>(out, theory.mode() == CardinalityMode::exactly ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(theory.feature_count()));
    for (auto u : theory.universe()) put<std::uint32_t>(out, u);
    put<std::uint64_t>(out, theory.clause_count());
    auto w = theory.words();
    out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(std::uint64_t)));
    if (!out) throw ValidationError("failed writing theory");
}

void save_theory(const Theory& theory, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write theory file " + path.string());
    save_theory(theory, out);
}

Theory load_theory(std::istream& in) {
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ParseError("not a theory file (bad magic)");
    if (get<std::uint8_t>(in) != kFormatVersion) throw ParseError("unsupported theory format version");
    const auto fingerprint = get<std::uint64_t>(in);
    const auto k = get<std::uint32_t>(in);
    const auto mode = get<std::uint8_t>(in) == 1 ? CardinalityMode::exactly : CardinalityMode::at_most;
    const auto n = get<std::uint32_t>(in);
    std::vector<std::uint32_t> universe(n);
    for (auto& u : universe) u = get<std::uint32_t>(in);
    Theory t(std::move(universe), k, mode, fingerprint);
    const auto clauses = get<std::uint64_t>(in);
    t.words_.resize(clauses * t.stride_);
    if (!in.read(reinterpret_cast<char*>(t.words_.data()),
                 static_cast<std::streamsize>(t.words_.size() * sizeof(std::uint64_t))))
        throw ParseError("theory file truncated");
    return t;
}

Theory load_theory(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open theory file " + path.string());
    return load_theory(in);
}

namespace {

std::string value_name(const FeatureSchema* schema, std::size_t feature, Code v) {
    if (!schema) return std::to_string(v);
    const auto& f = schema->feature(feature);
    if (f.discrete()) return f.values.at(v);
    std::ostringstream s;
    s << '[' << f.bins->ranges.at(v).lo << ',' << f.bins->ranges.at(v).hi << ')';
    return s.str();
}

} // namespace

std::string theory_to_text(const Theory& theory, const FeatureSchema* schema) {
    if (schema && schema->size() != theory.feature_count())
        throw ValidationError("theory_to_text: schema does not match the theory");
    std::ostringstream out;
    for (std::size_t c = 0; c < theory.clause_count(); ++c) {
        out << '(';
        bool first = true;
        for (std::size_t f = 0; f < theory.feature_count(); ++f) {
            auto lit = theory.literal(c, f);
            if (lit.empty()) continue;
            if (!first) out << " ∨ ";
            first = false;
            out << (schema ? schema->feature(f).name : "x" + std::to_string(f + 1)) << " ∈ {";
            for (std::size_t i = 0; i < lit.size(); ++i) out << (i ? "," : "") << value_name(schema, f, lit[i]);
            out << '}';
        }
        out << ')';
        if (c + 1 < theory.clause_count()) out << " ∧";
        out << '\n';
    }
    return out.str();
}

} // namespace cadv
