#include "cadv/schema.hpp"

#include "cadv/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace cadv {

using nlohmann::json;

std::string_view to_string(FeatureKind kind) {
    switch (kind) {
    case FeatureKind::boolean: return "boolean";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::continuous: return "continuous";
    }
    return "unknown";
}

FeatureKind parse_feature_kind(std::string_view text) {
    if (text == "boolean") return FeatureKind::boolean;
    if (text == "categorical") return FeatureKind::categorical;
    if (text == "continuous") return FeatureKind::continuous;
    throw SchemaError("unknown feature kind '" + std::string(text) + "'");
}

std::optional<std::size_t> Feature::value_index(std::string_view token) const {
    auto it = std::find(values.begin(), values.end(), token);
    if (it == values.end()) return std::nullopt;
    return static_cast<std::size_t>(it - values.begin());
}

std::uint32_t Feature::universe_size() const {
    if (discrete()) return static_cast<std::uint32_t>(values.size());
    return bins ? static_cast<std::uint32_t>(bins->size()) : 0U;
}

namespace {

void validate_bins(const Feature& f) {
    if (!f.bins) return;
    const auto& r = f.bins->ranges;
    if (r.empty()) throw SchemaError("feature '" + f.name + "': empty bin set");
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(r[i].lo < r[i].hi))
            throw SchemaError("feature '" + f.name + "': bin " + std::to_string(i) + " has lo >= hi");
        if (i > 0 && r[i].lo < r[i - 1].hi)
            throw SchemaError("feature '" + f.name + "': bins overlap or are unsorted");
    }
}

} // namespace

FeatureSchema::FeatureSchema(std::vector<Feature> features, std::vector<std::string> classes)
    : features_(std::move(features)), classes_(std::move(classes)) {
    std::set<std::string> names;
    for (auto& f : features_) {
        if (f.name.empty()) throw SchemaError("feature with empty name");
        if (!names.insert(f.name).second) throw SchemaError("duplicate feature name '" + f.name + "'");
        if (f.kind == FeatureKind::boolean && f.values.empty()) f.values = {"0", "1"};
        if (f.discrete()) {
            if (f.values.empty()) throw SchemaError("feature '" + f.name + "': empty value set");
            if (f.kind == FeatureKind::boolean && f.values.size() != 2)
                throw SchemaError("feature '" + f.name + "': boolean features take exactly two values");
            std::set<std::string> seen(f.values.begin(), f.values.end());
            if (seen.size() != f.values.size())
                throw SchemaError("feature '" + f.name + "': duplicate values");
            if (f.bins || f.range) throw SchemaError("feature '" + f.name + "': bins/range on a discrete feature");
        } else {
            if (!f.values.empty()) throw SchemaError("feature '" + f.name + "': values on a continuous feature");
            validate_bins(f);
        }
    }
    std::set<std::string> cls(classes_.begin(), classes_.end());
    if (cls.size() != classes_.size()) throw SchemaError("duplicate class name");
}

std::optional<std::size_t> FeatureSchema::class_index(std::string_view name) const {
    auto it = std::find(classes_.begin(), classes_.end(), name);
    if (it == classes_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes_.begin());
}

std::optional<std::size_t> FeatureSchema::feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return i;
    return std::nullopt;
}

bool FeatureSchema::finalized() const {
    return std::all_of(features_.begin(), features_.end(),
                       [](const Feature& f) { return f.discrete() || f.bins.has_value(); });
}

std::vector<std::uint32_t> FeatureSchema::universe_sizes() const {
    if (!finalized()) throw ValidationError("schema not finalized: continuous features need bins (run discretize)");
    std::vector<std::uint32_t> out;
    out.reserve(features_.size());
    for (const auto& f : features_) out.push_back(f.universe_size());
    return out;
}

void FeatureSchema::set_bins(std::size_t feature, BinSet bins) {
    auto& f = features_.at(feature);
    if (f.discrete()) throw ValidationError("bins only apply to continuous features");
    f.bins = std::move(bins);
    validate_bins(f);
}

void FeatureSchema::set_range(std::size_t feature, ValueRange range) {
    auto& f = features_.at(feature);
    if (f.discrete()) throw ValidationError("ranges only apply to continuous features");
    f.range = range;
}

namespace {

struct Fnv1a {
    std::uint64_t h = 1469598103934665603ULL;
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    }
    void str(std::string_view s) {
        bytes(s.data(), s.size());
        unsigned char sep = 0xFF;
        bytes(&sep, 1);
    }
    void num(double v) { bytes(&v, sizeof v); }
};

} // namespace

std::uint64_t FeatureSchema::fingerprint() const {
    Fnv1a f;
    for (const auto& feat : features_) {
        f.str(feat.name);
        f.str(to_string(feat.kind));
        for (const auto& v : feat.values) f.str(v);
        if (feat.bins) {
            for (const auto& b : feat.bins->ranges) {
                f.num(b.lo);
                f.num(b.hi);
            }
            f.str(feat.bins->open_ends ? "open" : "strict");
        }
    }
    f.str("|classes|");
    for (const auto& c : classes_) f.str(c);
    return f.h;
}

FeatureSchema parse_schema_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("schema JSON: ") + e.what());
    }
    try {
        std::vector<Feature> features;
        for (const auto& jf : doc.at("features")) {
            Feature f;
            f.name = jf.at("name").get<std::string>();
            f.kind = parse_feature_kind(jf.at("kind").get<std::string>());
            if (jf.contains("values")) {
                for (const auto& v : jf.at("values")) {
                    // numbers are accepted for convenience ("values":[0,1])
                    f.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                }
            }
            if (jf.contains("bins")) {
                BinSet bs;
                for (const auto& jb : jf.at("bins")) bs.ranges.push_back({jb.at(0).get<double>(), jb.at(1).get<double>()});
                bs.open_ends = jf.value("open_ends", false);
                f.bins = std::move(bs);
            }
            if (jf.contains("range")) f.range = ValueRange{jf.at("range").at(0).get<double>(), jf.at("range").at(1).get<double>()};
            features.push_back(std::move(f));
        }
        std::vector<std::string> classes;
        if (doc.contains("classes"))
            for (const auto& c : doc.at("classes")) classes.push_back(c.is_string() ? c.get<std::string>() : c.dump());
        return FeatureSchema(std::move(features), std::move(classes));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema JSON: ") + e.what());
    }
}

std::string schema_to_json(const FeatureSchema& schema) {
    json doc;
    doc["features"] = json::array();
    for (const auto& f : schema.features()) {
        json jf;
        jf["name"] = f.name;
        jf["kind"] = std::string(to_string(f.kind));
        if (f.discrete()) jf["values"] = f.values;
        if (f.bins) {
            json bins = json::array();
            for (const auto& b : f.bins->ranges) bins.push_back({b.lo, b.hi});
            jf["bins"] = bins;
            jf["open_ends"] = f.bins->open_ends;
        }
        if (f.range) jf["range"] = {f.range->min, f.range->max};
        doc["features"].push_back(jf);
    }
    doc["classes"] = schema.classes();
    return doc.dump(2) + "\n";
}

FeatureSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open schema file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_schema_json(ss.str());
}

void save_schema(const FeatureSchema& schema, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write schema file " + path.string());
    out << schema_to_json(schema);
}

} // namespace cadv
