#include "cadv/dataset.hpp"

#include "cadv/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace cadv {

void validate_observation(const FeatureSchema& schema, const Observation& row, std::size_t row_index) {
    if (row.values.size() != schema.size())
        throw SchemaError("row " + std::to_string(row_index) + ": expected " + std::to_string(schema.size()) +
                          " values, got " + std::to_string(row.values.size()));
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema.feature(i);
        double v = row.values[i];
        if (f.discrete()) {
            if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(f.values.size()))
                throw SchemaError("row " + std::to_string(row_index) + ", feature '" + f.name +
                                  "': value index out of range");
        } else if (!std::isfinite(v)) {
            throw SchemaError("row " + std::to_string(row_index) + ", feature '" + f.name + "': non-finite value");
        }
    }
    if (row.label && *row.label >= schema.class_count())
        throw SchemaError("row " + std::to_string(row_index) + ": label out of range");
}

namespace {

// RFC-4180 record reader: quoted fields, doubled quotes, CRLF or LF endings.
// Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get(c);
            break;
        } else if (c == '\n') {
            break;
        } else {
            field.push_back(c);
        }
    }
    ++line;
    if (quoted) throw ParseError("line " + std::to_string(line) + ": unterminated quoted field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

std::string trim(std::string s) {
    auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

double parse_decimal(const std::string& token, std::size_t line, const std::string& feature) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!token.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || token.empty())
        throw ParseError("line " + std::to_string(line) + ", feature '" + feature + "': '" + token +
                         "' is not a decimal number");
    return v;
}

} // namespace

Dataset parse_csv(std::istream& in, const FeatureSchema& schema) {
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!read_record(in, fields, line)) throw ParseError("CSV is empty (header row required)");
    if (fields.size() != schema.size() + 1)
        throw ParseError("header has " + std::to_string(fields.size()) + " columns, expected " +
                         std::to_string(schema.size()) + " features plus a label column");
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (trim(fields[i]) != schema.feature(i).name)
            throw SchemaError("header column " + std::to_string(i) + " is '" + fields[i] + "', schema expects '" +
                              schema.feature(i).name + "'");
    }

    Dataset data{schema, {}};
    while (read_record(in, fields, line)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() != schema.size() + 1)
            throw ParseError("line " + std::to_string(line) + ": ragged row with " + std::to_string(fields.size()) +
                             " fields, expected " + std::to_string(schema.size() + 1));
        Observation row;
        row.values.resize(schema.size());
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const auto& f = schema.feature(i);
            std::string token = trim(fields[i]);
            if (token.empty())
                throw ParseError("line " + std::to_string(line) + ", feature '" + f.name + "': missing value");
            if (f.discrete()) {
                auto idx = f.value_index(token);
                if (!idx)
                    throw SchemaError("line " + std::to_string(line) + ", feature '" + f.name + "': unknown value '" +
                                      token + "'");
                row.values[i] = static_cast<double>(*idx);
            } else {
                row.values[i] = parse_decimal(token, line, f.name);
            }
        }
        std::string label = trim(fields.back());
        if (!label.empty()) {
            auto idx = schema.class_index(label);
            if (!idx)
                throw SchemaError("line " + std::to_string(line) + ": unknown class '" + label + "'");
            row.label = *idx;
        }
        data.rows.push_back(std::move(row));
    }
    return data;
}

Dataset load_csv(const std::filesystem::path& csv_path, const FeatureSchema& schema) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw ParseError("cannot open CSV file " + csv_path.string());
    return parse_csv(in, schema);
}

Dataset load_csv(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
    return load_csv(csv_path, load_schema(schema_path));
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

void write_csv(std::ostream& out, const Dataset& data) {
    const auto& schema = data.schema;
    for (std::size_t i = 0; i < schema.size(); ++i) out << csv_escape(schema.feature(i).name) << ',';
    out << "label\n";
    std::ostringstream num;
    num.precision(17);
    for (const auto& row : data.rows) {
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const auto& f = schema.feature(i);
            if (f.discrete()) {
                out << csv_escape(f.values.at(static_cast<std::size_t>(row.values[i])));
            } else {
                num.str("");
                num << row.values[i];
                out << num.str();
            }
            out << ',';
        }
        if (row.label) out << csv_escape(schema.classes().at(*row.label));
        out << '\n';
    }
}

NormalizedDataset normalize(const Dataset& data) {
    if (data.empty()) throw ValidationError("normalize: dataset is empty");
    NormalizationParams params;
    params.ranges.resize(data.schema.size());
    for (std::size_t i = 0; i < data.schema.size(); ++i) {
        const auto& f = data.schema.feature(i);
        if (f.discrete()) continue;
        double lo = data.rows.front().values[i];
        double hi = lo;
        for (const auto& row : data.rows) {
            lo = std::min(lo, row.values[i]);
            hi = std::max(hi, row.values[i]);
        }
        params.ranges[i] = ValueRange{lo, hi};
        if (hi == lo) params.warnings.push_back(f.name);
    }
    return {apply_normalization(data, params), params};
}

Dataset apply_normalization(const Dataset& data, const NormalizationParams& params) {
    if (params.ranges.size() != data.schema.size())
        throw ValidationError("normalization parameters do not match the schema");
    Dataset out = data;
    for (std::size_t i = 0; i < data.schema.size(); ++i) {
        if (!params.ranges[i]) continue;
        const ValueRange r = *params.ranges[i];
        out.schema.set_range(i, r);
        const double span = r.max - r.min;
        for (auto& row : out.rows) row.values[i] = span > 0.0 ? (row.values[i] - r.min) / span : 0.0;
    }
    return out;
}

NormalizationParams params_from_schema(const FeatureSchema& schema) {
    NormalizationParams params;
    params.ranges.resize(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema.feature(i);
        if (f.discrete()) continue;
        if (!f.range) throw ValidationError("feature '" + f.name + "' has no normalization range in the schema");
        params.ranges[i] = f.range;
    }
    return params;
}

SplitIndices split_indices(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ValidationError("split: test_fraction must lie in (0, 1)");
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const auto& label = data.rows[i].label;
        if (!label) throw ValidationError("split: row " + std::to_string(i) + " is unlabeled");
        by_class[*label].push_back(i);
    }

    const double total_test = std::round(test_fraction * static_cast<double>(data.rows.size()));
    std::vector<std::size_t> quota;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    std::size_t slot = 0;
    for (const auto& [cls, rows] : by_class) {
        double exact = test_fraction * static_cast<double>(rows.size());
        auto q = static_cast<std::size_t>(std::floor(exact));
        quota.push_back(q);
        assigned += q;
        remainders.emplace_back(exact - static_cast<double>(q), slot++);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    auto missing = static_cast<std::size_t>(total_test) > assigned ? static_cast<std::size_t>(total_test) - assigned : 0;
    for (std::size_t i = 0; i < missing && i < remainders.size(); ++i) ++quota[remainders[i].second];

    std::mt19937_64 rng(seed);
    SplitIndices out;
    slot = 0;
    for (auto& [cls, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        std::size_t q = quota[slot++];
        if (q == 0 || q == rows.size())
            throw ValidationError("split: class '" + data.schema.classes().at(cls) +
                                  "' would have no rows in one partition");
        out.test.insert(out.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(q));
        out.train.insert(out.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(q), rows.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
    Dataset out{data.schema, {}};
    out.rows.reserve(indices.size());
    for (auto i : indices) out.rows.push_back(data.rows.at(i));
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    auto idx = split_indices(data, test_fraction, seed);
    return {subset(data, idx.train), subset(data, idx.test)};
}

Encoding::Encoding(const FeatureSchema& schema) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema.feature(i);
        Group g;
        g.first_column = width_;
        g.kind = f.kind;
        g.width = f.kind == FeatureKind::categorical ? f.values.size() : 1;
        width_ += g.width;
        groups_.push_back(g);
        for (std::size_t c = 0; c < g.width; ++c) column_feature_.push_back(i);
    }
}

Eigen::VectorXd Encoding::encode(const Observation& row) const {
    if (row.values.size() != groups_.size()) throw ValidationError("encode: observation width mismatch");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width_));
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        const auto& g = groups_[i];
        auto col = static_cast<Eigen::Index>(g.first_column);
        switch (g.kind) {
        case FeatureKind::continuous:
        case FeatureKind::boolean: x[col] = row.values[i]; break;
        case FeatureKind::categorical: x[col + static_cast<Eigen::Index>(row.values[i])] = 1.0; break;
        }
    }
    return x;
}

Observation Encoding::decode(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != width_) throw ValidationError("decode: vector width mismatch");
    Observation row;
    row.values.resize(groups_.size());
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        const auto& g = groups_[i];
        auto col = static_cast<Eigen::Index>(g.first_column);
        switch (g.kind) {
        case FeatureKind::continuous: row.values[i] = x[col]; break;
        case FeatureKind::boolean: row.values[i] = x[col] >= 0.5 ? 1.0 : 0.0; break;
        case FeatureKind::categorical: {
            Eigen::Index best = 0;
            x.segment(col, static_cast<Eigen::Index>(g.width)).maxCoeff(&best);
            row.values[i] = static_cast<double>(best);
            break;
        }
        }
    }
    return row;
}

EncodedDataset encode(const Dataset& data, const Encoding& encoding) {
    EncodedDataset out;
    out.x.resize(static_cast<Eigen::Index>(data.rows.size()), static_cast<Eigen::Index>(encoding.width()));
    out.labels.reserve(data.rows.size());
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
        out.x.row(static_cast<Eigen::Index>(r)) = encoding.encode(data.rows[r]).transpose();
        out.labels.push_back(data.rows[r].label.value_or(0));
    }
    return out;
}

} // namespace cadv
