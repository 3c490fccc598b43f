#pragma once

#include "cadv/attacks.hpp"
#include "cadv/dataset.hpp"
#include "cadv/discretizer.hpp"
#include "cadv/model.hpp"
#include "cadv/projector.hpp"
#include "cadv/theory.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cadv {

// Planted constrained domain: a random k=1 ground-truth theory over categorical,
// boolean and clustered continuous features; rows are rejection-sampled until
// the planted theory certifies them and labeled by a random linear teacher.
struct SynthConfig {
    std::size_t rows = 3000;
    std::size_t categorical = 2;
    std::uint32_t min_values = 3;
    std::uint32_t max_values = 4;
    std::size_t boolean = 2;
    std::size_t continuous = 6;
    std::uint32_t clusters = 4;        // per continuous feature
    double cluster_half_width = 0.02;
    std::size_t planted_clauses = 6;
    std::size_t literals_per_clause = 3;
    std::size_t classes = 2;
    double label_noise = 0.05;         // teacher score noise, relative to its spread
    std::uint64_t seed = 0;
};

struct SyntheticDomain {
    Dataset data;    // raw schema: continuous features carry no bins
    Theory planted;  // over (value index | cluster index) codes
    std::vector<std::vector<double>> cluster_centers;  // per continuous feature
};

SyntheticDomain synthesize(const SynthConfig& config);

struct ExperimentConfig {
    std::vector<AttackKind> attacks{AttackKind::pgd, AttackKind::csp};
    std::vector<std::size_t> iterations{1, 5, 10, 15, 20, 25, 30, 35};
    double step = 0.01;
    double phi = 20.0;
    std::size_t k = 1;
    CardinalityMode mode = CardinalityMode::at_most;
    double clause_cap = 5e7;
    double test_fraction = 0.3;
    std::size_t max_test_samples = 0;  // 0 = the whole test split
    std::size_t bootstrap = 1000;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    DiscretizerConfig discretizer;
    TrainConfig train;
};

// Everything the measurements need, built from the train split only.
struct PreparedExperiment {
    Dataset train;  // normalized, binned schema
    Dataset test;   // normalized with train statistics, same schema
    Theory theory;
    MlpModel model;
    Encoding encoding;
    ClassBounds bounds;
    double clean_accuracy = 0.0;
};

PreparedExperiment prepare_experiment(const Dataset& raw, const ExperimentConfig& config);

struct MetricsRow {
    std::string attack;
    std::size_t iterations = 0;
    std::size_t samples = 0;
    double invalid_rate = 0.0;
    double model_accuracy = 0.0;
    double constrained_accuracy = 0.0;
    // Accuracy with unprojectable samples classified as crafted.
    double projected_plain_accuracy = 0.0;
    double projection_success_rate = 0.0;  // projected / invalid; 1 with nothing invalid
    std::size_t invalid = 0;
    std::size_t unsat = 0;
    double invalid_ci = 0.0;
    double model_accuracy_ci = 0.0;
    double constrained_accuracy_ci = 0.0;
    double projection_success_ci = 0.0;
};

// Per-sample outcome at one iteration count.
struct SampleOutcome {
    bool invalid = false;
    bool correct = false;             // crafted example classified as its label
    bool constrained_correct = false;
    bool plain_correct = false;       // projected or crafted, no unsat rule
    ProjectionOutcome projection = ProjectionOutcome::already_compliant;
};

struct CellResult {
    MetricsRow row;
    std::vector<SampleOutcome> samples;
};

std::vector<CellResult> run_cells(const PreparedExperiment& prepared, const ExperimentConfig& config);
std::vector<MetricsRow> run_experiment(const PreparedExperiment& prepared, const ExperimentConfig& config);
std::vector<MetricsRow> run_experiment(const Dataset& raw, const ExperimentConfig& config);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

// Half-width of the percentile bootstrap 95% interval of the mean of 0/1 or
// real samples.
double bootstrap_half_width(std::span<const double> values, std::size_t resamples, std::uint64_t seed);

struct DriftReport {
    std::size_t total = 0;
    std::size_t violations = 0;
    double rate = 0.0;
    std::vector<std::size_t> violating_rows;
    std::size_t clause_count = 0;

    std::string to_json() const;
};

DriftReport drift_check(const Theory& theory, const Dataset& test);

struct BenchConfig {
    std::vector<std::size_t> sample_counts{20000, 40000};
    // Each entry is one schema; k=1 clause spaces have prod |X_i| clauses.
    std::vector<std::vector<std::uint32_t>> universes{{8, 8, 8, 8}, {16, 8, 8, 8}};
    std::size_t repetitions = 5;
    double clause_cap = 5e7;
    std::size_t threads = 1;
    std::uint64_t seed = 0;
};

struct BenchCell {
    std::size_t samples = 0;
    double domain_product = 0.0;
    double seconds = 0.0;     // median over repetitions
    double normalized = 0.0;  // seconds / (samples * domain_product)
    bool skipped = false;
    std::string note;
};

std::vector<BenchCell> bench_learning(const BenchConfig& config);
void write_bench_csv(std::ostream& out, const std::vector<BenchCell>& cells);

struct FeatureSatisfaction {
    std::string feature;
    double mean = 0.0;
    double ci_half_width = 0.0;
};

std::vector<FeatureSatisfaction> clause_satisfaction_chart(const Theory& theory, const FeatureSchema& schema,
                                                           std::span<const CodeVector> batch,
                                                           std::size_t resamples = 1000, std::uint64_t seed = 0);
void write_satisfaction_csv(std::ostream& out, const std::vector<FeatureSatisfaction>& rows);

// gnuplot script drawing invalid rate and accuracies against iterations from
// a metrics CSV.
std::string gnuplot_script(const std::string& metrics_csv);

} // namespace cadv
