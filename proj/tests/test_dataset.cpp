#include "cadv/dataset.hpp"
#include "cadv/error.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace cadv;

namespace {

FeatureSchema mixed_schema() {
    return FeatureSchema({testutil::discrete("proto", {"tcp", "udp", "icmp"}), testutil::boolean("flag"),
                          testutil::continuous("bytes")},
                         {"normal", "attack"});
}

} // namespace

TEST_CASE("schema json round trip keeps bins and ranges") {
    auto schema = mixed_schema();
    schema.set_bins(2, BinSet{{{0.0, 0.25}, {0.5, 1.0}}, false});
    schema.set_range(2, ValueRange{-3.0, 7.5});
    const auto back = parse_schema_json(schema_to_json(schema));
    CHECK(back == schema);
    CHECK(back.fingerprint() == schema.fingerprint());
    CHECK(back.finalized());
    CHECK(back.universe_sizes() == std::vector<std::uint32_t>{3, 2, 2});
}

TEST_CASE("schema fingerprint changes with bin edges") {
    auto a = mixed_schema();
    auto b = mixed_schema();
    a.set_bins(2, BinSet{{{0.0, 0.5}}, false});
    b.set_bins(2, BinSet{{{0.0, 0.6}}, false});
    CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("schema json rejects unknown kinds") {
    CHECK_THROWS_AS(parse_schema_json(R"({"features":[{"name":"a","kind":"ordinal"}],"classes":["x"]})"),
                    SchemaError);
    CHECK_THROWS_AS(parse_schema_json("{not json"), Error);
}

TEST_CASE("csv parses tokens, quotes and labels") {
    std::istringstream in("proto,flag,bytes,label\n"
                          "tcp,1,10.5,normal\n"
                          "\"udp\",0,3,attack\n"
                          "icmp,1,-2e1,\n");
    const auto data = parse_csv(in, mixed_schema());
    REQUIRE(data.size() == 3);
    CHECK(data.rows[0].values == std::vector<double>{0, 1, 10.5});
    CHECK(data.rows[1].values == std::vector<double>{1, 0, 3});
    CHECK(data.rows[2].values[2] == -20.0);
    CHECK(data.rows[0].label == 0u);
    CHECK(data.rows[1].label == 1u);
    CHECK_FALSE(data.rows[2].label.has_value());
}

TEST_CASE("csv errors name the problem") {
    const auto schema = mixed_schema();
    auto parse = [&](const std::string& text) {
        std::istringstream in(text);
        return parse_csv(in, schema);
    };
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK_THROWS_AS(parse("proto,flag,label\n"), ParseError);
    CHECK_THROWS_AS(parse("proto,flg,bytes,label\n"), SchemaError);
    CHECK_THROWS_AS(parse("proto,flag,bytes,label\ntcp,1,2\n"), ParseError);
    CHECK_THROWS_AS(parse("proto,flag,bytes,label\nsctp,1,2,normal\n"), SchemaError);
    CHECK_THROWS_AS(parse("proto,flag,bytes,label\ntcp,1,abc,normal\n"), ParseError);
    CHECK_THROWS_AS(parse("proto,flag,bytes,label\ntcp,1,2,unknown\n"), SchemaError);
    CHECK_THROWS_AS(parse("proto,flag,bytes,label\n\"tcp,1,2,normal\n"), ParseError);
    try {
        parse("proto,flag,bytes,label\ntcp,1,2,normal\nsctp,1,2,normal\n");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("sctp") != std::string::npos);
    }
}

TEST_CASE("csv write then parse is the identity") {
    std::istringstream in("proto,flag,bytes,label\ntcp,1,0.125,normal\nudp,0,3,attack\n");
    const auto data = parse_csv(in, mixed_schema());
    std::ostringstream out;
    write_csv(out, data);
    std::istringstream again(out.str());
    const auto back = parse_csv(again, mixed_schema());
    CHECK(back.rows == data.rows);
}

TEST_CASE("normalization fits train ranges and reuses them unclipped") {
    Dataset d{mixed_schema(), {}};
    d.rows = {{{0, 0, 2.0}, 0}, {{1, 1, 6.0}, 1}, {{2, 0, 4.0}, 0}};
    const auto n = normalize(d);
    CHECK(n.data.rows[0].values[2] == doctest::Approx(0.0));
    CHECK(n.data.rows[1].values[2] == doctest::Approx(1.0));
    CHECK(n.data.rows[2].values[2] == doctest::Approx(0.5));
    CHECK(n.data.rows[1].values[0] == 1.0);  // discrete untouched
    REQUIRE(n.data.schema.feature(2).range.has_value());
    CHECK(*n.data.schema.feature(2).range == ValueRange{2.0, 6.0});

    Dataset test{mixed_schema(), {{{0, 0, 8.0}, 0}}};
    const auto t = apply_normalization(test, n.params);
    CHECK(t.rows[0].values[2] == doctest::Approx(1.5));
    const auto p = params_from_schema(n.data.schema);
    CHECK(apply_normalization(test, p).rows[0].values[2] == doctest::Approx(1.5));
}

TEST_CASE("constant continuous feature maps to zero with a warning") {
    Dataset d{mixed_schema(), {{{0, 0, 3.0}, 0}, {{1, 1, 3.0}, 1}}};
    const auto n = normalize(d);
    CHECK(n.data.rows[0].values[2] == 0.0);
    CHECK(n.data.rows[1].values[2] == 0.0);
    CHECK(n.params.warnings == std::vector<std::string>{"bytes"});
}

TEST_CASE("stratified split is a seeded partition with largest-remainder counts") {
    Dataset d{mixed_schema(), {}};
    for (int i = 0; i < 70; ++i) d.rows.push_back({{0, 0, double(i)}, 0});
    for (int i = 0; i < 33; ++i) d.rows.push_back({{1, 1, double(i)}, 1});
    const auto s = split_indices(d, 0.3, 7);
    CHECK(s.test.size() == 31);  // round(103 * 0.3)
    CHECK(s.train.size() + s.test.size() == d.size());
    std::vector<int> seen(d.size(), 0);
    for (auto i : s.train) ++seen[i];
    for (auto i : s.test) ++seen[i];
    for (int c : seen) CHECK(c == 1);
    std::size_t test_attack = 0;
    for (auto i : s.test) test_attack += d.rows[i].label == 1u;
    CHECK((test_attack == 10 || test_attack == 11));
    const auto again = split_indices(d, 0.3, 7);
    CHECK(again.test == s.test);
    CHECK(split_indices(d, 0.3, 8).test != s.test);
    CHECK_THROWS_AS(split_indices(d, 1.0, 0), ValidationError);
}

TEST_CASE("encoding round trip and layout") {
    const Encoding enc(mixed_schema());
    CHECK(enc.width() == 5);  // 3 one-hot + 1 boolean + 1 continuous
    CHECK(enc.group(0).width == 3);
    CHECK(enc.group(2).first_column == 4);
    CHECK(enc.feature_of_column(2) == 0);
    CHECK(enc.feature_of_column(3) == 1);
    const Observation row{{2, 1, 0.37}, 1};
    const auto x = enc.encode(row);
    CHECK(x(2) == 1.0);
    CHECK(x(0) == 0.0);
    CHECK(x(3) == 1.0);
    CHECK(x(4) == 0.37);
    const auto back = enc.decode(x);
    CHECK(back.values == row.values);
}

TEST_CASE("validate_observation rejects out-of-range indices") {
    const auto schema = mixed_schema();
    CHECK_NOTHROW(validate_observation(schema, {{2, 1, 0.5}, 1}, 0));
    CHECK_THROWS_AS(validate_observation(schema, {{3, 1, 0.5}, 1}, 0), SchemaError);
    CHECK_THROWS_AS(validate_observation(schema, {{0, 1}, 1}, 0), SchemaError);
    CHECK_THROWS_AS(validate_observation(schema, {{0, 1, NAN}, 1}, 0), SchemaError);
    CHECK_THROWS_AS(validate_observation(schema, {{0, 1, 0.5}, 2}, 0), SchemaError);
}
