#include "cadv/error.hpp"
#include "cadv/evaluation.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace cadv;

namespace {

SynthConfig small_synth(std::uint64_t seed) {
    SynthConfig s;
    s.rows = 500;
    s.continuous = 3;
    s.seed = seed;
    return s;
}

ExperimentConfig small_experiment(std::uint64_t seed) {
    ExperimentConfig e;
    e.iterations = {1, 5, 10};
    e.max_test_samples = 40;
    e.bootstrap = 100;
    e.seed = seed;
    e.train.epochs = 4;
    e.train.hidden = {16};
    return e;
}

// Cluster index of a continuous value: the nearest planted center.
Code nearest(const std::vector<double>& centers, double v) {
    Code best = 0;
    for (Code c = 1; c < centers.size(); ++c)
        if (std::abs(centers[c] - v) < std::abs(centers[best] - v)) best = c;
    return best;
}

} // namespace

TEST_CASE("bootstrap half width") {
    const std::vector<double> one{1.0};
    CHECK(bootstrap_half_width(one, 1000, 0) == 0.0);
    const std::vector<double> same(50, 0.3);
    CHECK(bootstrap_half_width(same, 500, 1) == doctest::Approx(0.0));
    // Bernoulli(0.5) with n = 400: normal approximation 1.96 * 0.5 / 20 = 0.049
    std::vector<double> coin(400);
    for (std::size_t i = 0; i < coin.size(); ++i) coin[i] = i % 2;
    const double hw = bootstrap_half_width(coin, 2000, 2);
    CHECK(hw == doctest::Approx(0.049).epsilon(0.12));
    CHECK(bootstrap_half_width(coin, 2000, 2) == hw);
}

TEST_CASE("synthetic rows satisfy the planted theory") {
    const auto dom = synthesize(small_synth(3));
    CHECK(dom.data.size() == 500);
    const auto& schema = dom.data.schema;
    const std::size_t first_cont = 4;
    std::set<std::size_t> labels;
    for (const auto& row : dom.data.rows) {
        CodeVector codes(schema.size());
        for (std::size_t f = 0; f < schema.size(); ++f)
            codes[f] = f < first_cont ? static_cast<Code>(row.values[f])
                                      : nearest(dom.cluster_centers[f - first_cont], row.values[f]);
        CHECK(certifies(dom.planted, codes));
        labels.insert(*row.label);
        CHECK_NOTHROW(validate_observation(schema, row, 0));
    }
    CHECK(labels.size() == 2);
    const auto again = synthesize(small_synth(3));
    CHECK(again.data.rows == dom.data.rows);
}

TEST_CASE("drift on the learning data is zero and flags foreign rows") {
    const auto dom = synthesize(small_synth(5));
    const auto p = prepare_experiment(dom.data, small_experiment(5));
    const auto own = drift_check(p.theory, p.train);
    CHECK(own.violations == 0);
    CHECK(own.rate == 0.0);
    CHECK(own.total == p.train.size());
    // random rows: the flagged set is exactly the rows the literal oracle rejects
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset odd{p.train.schema, {}};
    for (int i = 0; i < 200; ++i) {
        Observation row;
        for (const auto& f : odd.schema.features())
            row.values.push_back(f.discrete() ? static_cast<double>(rng() % f.values.size()) : u(rng));
        odd.rows.push_back(row);
    }
    const auto r = drift_check(p.theory, odd);
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < odd.size(); ++i)
        if (!testutil::oracle_certifies(p.theory, to_codes(odd.schema, odd.rows[i]))) expected.push_back(i);
    CHECK(r.violating_rows == expected);
    CHECK_FALSE(expected.empty());
    CHECK(r.rate == doctest::Approx(expected.size() / 200.0));
    CHECK(r.to_json().find("\"violations\": " + std::to_string(expected.size())) != std::string::npos);
}

TEST_CASE("experiment metrics are accounted consistently and reproducible") {
    const auto dom = synthesize(small_synth(7));
    const auto cfg = small_experiment(7);
    const auto p = prepare_experiment(dom.data, cfg);
    CHECK(p.clean_accuracy > 0.5);
    const auto cells = run_cells(p, cfg);
    REQUIRE(cells.size() == 6);
    for (const auto& cell : cells) {
        const auto& row = cell.row;
        CHECK(row.samples == 40);
        std::size_t invalid = 0, projected = 0, unsat = 0, correct = 0, constrained = 0;
        for (const auto& s : cell.samples) {
            invalid += s.invalid;
            correct += s.correct;
            constrained += s.constrained_correct;
            if (s.invalid) {
                projected += s.projection == ProjectionOutcome::projected;
                unsat += s.projection == ProjectionOutcome::unsat_within_budget;
                CHECK(s.projection != ProjectionOutcome::already_compliant);
                if (s.projection == ProjectionOutcome::unsat_within_budget) CHECK(s.constrained_correct);
            } else {
                CHECK(s.constrained_correct == s.correct);
            }
        }
        CHECK(row.invalid == invalid);
        CHECK(row.unsat == unsat);
        CHECK(invalid == projected + unsat);
        CHECK(row.invalid_rate == doctest::Approx(invalid / 40.0));
        CHECK(row.model_accuracy == doctest::Approx(correct / 40.0));
        CHECK(row.constrained_accuracy == doctest::Approx(constrained / 40.0));
        CHECK(row.projection_success_rate ==
              doctest::Approx(invalid == 0 ? 1.0 : static_cast<double>(projected) / invalid));
        CHECK(row.invalid_ci >= 0.0);
    }
    std::ostringstream a, b;
    write_metrics_csv(a, run_experiment(dom.data, cfg));
    write_metrics_csv(b, run_experiment(dom.data, cfg));
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("attack,iterations,samples,invalid_rate", 0) == 0);
}

TEST_CASE("iteration grid is validated") {
    const auto dom = synthesize(small_synth(1));
    auto cfg = small_experiment(1);
    const auto p = prepare_experiment(dom.data, cfg);
    cfg.iterations = {5, 1};
    CHECK_THROWS_AS(run_cells(p, cfg), ValidationError);
    cfg.iterations = {};
    CHECK_THROWS_AS(run_cells(p, cfg), ValidationError);
}

TEST_CASE("clause satisfaction chart matches a direct recount") {
    FeatureSchema schema({testutil::discrete("a", {"0", "1", "2"}), testutil::discrete("b", {"0", "1"})}, {"c"});
    const std::vector<CodeVector> e{{0, 0}, {1, 1}, {2, 1}};
    const auto t = learn_theory(schema, SpaceOptions{2}, e);
    const std::vector<CodeVector> batch{{0, 0}, {2, 0}, {1, 1}};
    const auto chart = clause_satisfaction_chart(t, schema, batch, 200, 3);
    REQUIRE(chart.size() == 2);
    for (std::size_t f = 0; f < 2; ++f) {
        double total = 0;
        for (const auto& x : batch)
            for (std::size_t c = 0; c < t.clause_count(); ++c) {
                const auto lit = t.literal(c, f);
                total += std::find(lit.begin(), lit.end(), x[f]) != lit.end();
            }
        CHECK(chart[f].mean == doctest::Approx(total / 3.0));
        CHECK(chart[f].ci_half_width >= 0.0);
    }
    CHECK(chart[0].feature == "a");
    const std::vector<CodeVector> single{{0, 0}};
    CHECK(clause_satisfaction_chart(t, schema, single)[0].ci_half_width == 0.0);
    std::ostringstream out;
    write_satisfaction_csv(out, chart);
    CHECK(out.str().rfind("feature,mean_satisfied,ci_half_width\na,", 0) == 0);
    CHECK_THROWS_AS(clause_satisfaction_chart(t, schema, std::vector<CodeVector>{}), ValidationError);
}

TEST_CASE("bench cells and the cap") {
    BenchConfig cfg;
    cfg.sample_counts = {200, 400};
    cfg.universes = {{4, 4}, {1000, 1000, 1000}};
    cfg.repetitions = 1;
    cfg.clause_cap = 1e6;
    const auto cells = bench_learning(cfg);
    REQUIRE(cells.size() == 4);
    CHECK_FALSE(cells[0].skipped);
    CHECK(cells[0].domain_product == 16.0);
    CHECK(cells[1].samples == 400);
    CHECK(cells[2].skipped);
    std::ostringstream out;
    write_bench_csv(out, cells);
    CHECK(out.str().rfind("samples,domain_product,seconds,normalized,skipped,note\n200,16,", 0) == 0);
}

TEST_CASE("gnuplot script refers to the metrics file") {
    const auto s = gnuplot_script("metrics.csv");
    CHECK(s.find("'metrics.csv'") != std::string::npos);
    CHECK(s.find("set datafile separator ','") != std::string::npos);
}
