#include "cadv/evaluation.hpp"

#include "cadv/error.hpp"
#include "cadv/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace cadv {

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double quantile_sorted(const std::vector<double>& s, double q) {
    if (s.empty()) return 0.0;
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

} // namespace

SyntheticDomain synthesize(const SynthConfig& config) {
    const std::size_t n = config.categorical + config.boolean + config.continuous;
    if (n < 2) throw ValidationError("synthetic domain needs at least two features");
    if (config.rows < 2 || config.classes < 2) throw ValidationError("synthetic domain needs rows and two classes");
    if (config.min_values < 2 || config.max_values < config.min_values)
        throw ValidationError("categorical value counts must satisfy 2 <= min <= max");
    if (config.clusters < 2) throw ValidationError("continuous features need at least two clusters");
    if (config.literals_per_clause < 1 || config.literals_per_clause > n)
        throw ValidationError("literals per planted clause must lie in [1, feature count]");
    if (!(config.cluster_half_width > 0.0) || config.cluster_half_width * 4.0 * config.clusters >= 1.0)
        throw ValidationError("clusters too wide to stay separated in [0, 1]");

    std::mt19937_64 rng(config.seed);
    std::vector<Feature> features;
    std::vector<std::uint32_t> universe;
    for (std::size_t i = 0; i < config.categorical; ++i) {
        Feature f;
        f.name = "cat" + std::to_string(i + 1);
        f.kind = FeatureKind::categorical;
        const auto m = std::uniform_int_distribution<std::uint32_t>(config.min_values, config.max_values)(rng);
        for (std::uint32_t v = 0; v < m; ++v) f.values.push_back("v" + std::to_string(v));
        universe.push_back(m);
        features.push_back(std::move(f));
    }
    for (std::size_t i = 0; i < config.boolean; ++i) {
        Feature f;
        f.name = "flag" + std::to_string(i + 1);
        f.kind = FeatureKind::boolean;
        f.values = {"0", "1"};
        universe.push_back(2);
        features.push_back(std::move(f));
    }
    SyntheticDomain out;
    const double slot = 1.0 / static_cast<double>(config.clusters);
    for (std::size_t i = 0; i < config.continuous; ++i) {
        Feature f;
        f.name = "num" + std::to_string(i + 1);
        f.kind = FeatureKind::continuous;
        universe.push_back(config.clusters);
        features.push_back(std::move(f));
        std::uniform_real_distribution<double> jitter(-0.2 * slot, 0.2 * slot);
        std::vector<double> centers;
        for (std::uint32_t c = 0; c < config.clusters; ++c)
            centers.push_back((static_cast<double>(c) + 0.5) * slot + jitter(rng));
        out.cluster_centers.push_back(std::move(centers));
    }
    std::vector<std::string> classes;
    for (std::size_t c = 0; c < config.classes; ++c) classes.push_back("class" + std::to_string(c));
    FeatureSchema schema(std::move(features), std::move(classes));

    out.planted = Theory(universe, 1, CardinalityMode::at_most, 0);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t c = 0; c < config.planted_clauses; ++c) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::vector<Code>> literals(n);
        for (std::size_t j = 0; j < config.literals_per_clause; ++j) {
            const std::size_t f = idx[j];
            literals[f].push_back(std::uniform_int_distribution<Code>(0, universe[f] - 1)(rng));
        }
        out.planted.add_clause(literals);
    }

    // rejection sampling over codes
    std::vector<CodeVector> codes;
    const std::size_t max_attempts = config.rows * 100000;
    std::size_t attempts = 0;
    CodeVector cand(n);
    while (codes.size() < config.rows) {
        if (++attempts > max_attempts)
            throw ValidationError("planted theory accepts too few observations; use fewer clauses or more literals");
        for (std::size_t f = 0; f < n; ++f) cand[f] = std::uniform_int_distribution<Code>(0, universe[f] - 1)(rng);
        if (certifies(out.planted, cand)) codes.push_back(cand);
    }

    Dataset data{schema, {}};
    std::uniform_real_distribution<double> within(-config.cluster_half_width, config.cluster_half_width);
    const std::size_t first_cont = config.categorical + config.boolean;
    for (const auto& c : codes) {
        Observation row;
        row.values.resize(n);
        for (std::size_t f = 0; f < n; ++f)
            row.values[f] = f < first_cont ? static_cast<double>(c[f]) : out.cluster_centers[f - first_cont][c[f]] + within(rng);
        data.rows.push_back(std::move(row));
    }

    // linear teacher on the model encoding
    const Encoding enc(schema);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd teacher(static_cast<Eigen::Index>(config.classes), static_cast<Eigen::Index>(enc.width()));
    for (Eigen::Index r = 0; r < teacher.rows(); ++r)
        for (Eigen::Index c = 0; c < teacher.cols(); ++c) teacher(r, c) = gauss(rng);
    std::vector<Eigen::VectorXd> scores;
    for (const auto& row : data.rows) scores.push_back(teacher * enc.encode(row));
    std::vector<double> noise(data.rows.size());
    for (auto& v : noise) v = gauss(rng);
    if (config.classes == 2) {
        std::vector<double> d;
        for (const auto& s : scores) d.push_back(s[1] - s[0]);
        const double mu = mean_of(d);
        double var = 0.0;
        for (double v : d) var += (v - mu) * (v - mu);
        const double sd = std::sqrt(var / static_cast<double>(d.size()));
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += config.label_noise * sd * noise[i];
        std::vector<double> sorted = d;
        std::sort(sorted.begin(), sorted.end());
        const double median = quantile_sorted(sorted, 0.5);
        for (std::size_t i = 0; i < d.size(); ++i) data.rows[i].label = d[i] > median ? 1 : 0;
    } else {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            Eigen::Index best = 0;
            (scores[i].array() + config.label_noise * noise[i]).maxCoeff(&best);
            data.rows[i].label = static_cast<std::size_t>(best);
        }
    }
    out.data = std::move(data);
    return out;
}

PreparedExperiment prepare_experiment(const Dataset& raw, const ExperimentConfig& config) {
    if (raw.empty()) throw ValidationError("experiment dataset is empty");
    PreparedExperiment p;
    auto [train_raw, test_raw] = split(raw, config.test_fraction, config.seed);
    NormalizedDataset norm = normalize(train_raw);
    p.train = std::move(norm.data);
    p.test = apply_normalization(test_raw, norm.params);

    DiscretizerConfig dc = config.discretizer;
    dc.seed = config.seed;
    const FeatureSchema binned = discretize(p.train, dc);
    p.train.schema = binned;
    p.test.schema = binned;

    const auto codes = to_codes(p.train);
    const std::set<CodeVector> distinct(codes.begin(), codes.end());
    const std::vector<CodeVector> unique(distinct.begin(), distinct.end());
    SpaceOptions options;
    options.k = config.k;
    options.mode = config.mode;
    options.clause_cap = config.clause_cap;
    p.theory = learn_theory(binned, options, unique, config.threads);

    p.encoding = Encoding(binned);
    const EncodedDataset tr = encode(p.train, p.encoding);
    TrainConfig tc = config.train;
    tc.seed = config.seed;
    p.model = train(tr.x, tr.labels, binned.class_count(), tc).model;
    p.bounds = learn_class_bounds(p.train);
    const EncodedDataset te = encode(p.test, p.encoding);
    p.clean_accuracy = accuracy(p.model, te.x, te.labels);
    return p;
}

double bootstrap_half_width(std::span<const double> values, std::size_t resamples, std::uint64_t seed) {
    if (values.size() < 2 || resamples == 0) return 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double sum = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) sum += values[pick(rng)];
        m = sum / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    return (quantile_sorted(means, 0.975) - quantile_sorted(means, 0.025)) / 2.0;
}

std::vector<CellResult> run_cells(const PreparedExperiment& prepared, const ExperimentConfig& config) {
    if (config.iterations.empty()) throw ValidationError("iteration grid is empty");
    if (!std::is_sorted(config.iterations.begin(), config.iterations.end()))
        throw ValidationError("iteration grid must be sorted ascending");
    if (config.attacks.empty()) throw ValidationError("no attacks configured");
    const std::size_t max_iter = std::max<std::size_t>(1, config.iterations.back());
    const FeatureSchema& schema = prepared.test.schema;
    if (schema.fingerprint() != prepared.theory.fingerprint())
        throw ValidationError("theory was learned under a different schema than the test data");

    // attacked samples: the whole test split or a seeded subset kept in order
    std::vector<std::size_t> chosen(prepared.test.size());
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    if (config.max_test_samples > 0 && chosen.size() > config.max_test_samples) {
        std::mt19937_64 rng(config.seed ^ 0x5eedULL);
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(config.max_test_samples);
        std::sort(chosen.begin(), chosen.end());
    }
    const Dataset test = subset(prepared.test, chosen);
    const EncodedDataset enc = encode(test, prepared.encoding);
    const std::size_t m = enc.labels.size();
    if (m == 0) throw ValidationError("no test samples to attack");

    std::vector<CellResult> cells;
    for (AttackKind kind : config.attacks) {
        AttackConfig ac;
        ac.step = config.step;
        ac.iterations = max_iter;
        ac.seed = config.seed;
        const auto results = attack_batch(kind, prepared.model, schema, prepared.encoding, enc.x, enc.labels, ac,
                                          prepared.bounds, config.threads);
        for (std::size_t r : config.iterations) {
            CellResult cell;
            cell.samples.resize(m);
            parallel_for(m, config.threads, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    const Eigen::VectorXd& x = results[i].trace[r];
                    const std::size_t y = enc.labels[i];
                    Observation obs = prepared.encoding.decode(x);
                    obs.label = y;
                    SampleOutcome& s = cell.samples[i];
                    s.correct = prepared.model.classify(x) == y;
                    s.invalid = !certifies(prepared.theory, to_codes(schema, obs));
                    s.constrained_correct = s.plain_correct = s.correct;
                    if (!s.invalid) continue;
                    const auto pr = project(prepared.theory, schema, obs, config.phi, prepared.bounds, y);
                    s.projection = pr.outcome;
                    if (pr.outcome == ProjectionOutcome::projected) {
                        s.constrained_correct = s.plain_correct =
                            prepared.model.classify(prepared.encoding.encode(pr.repaired)) == y;
                    } else {
                        s.constrained_correct = true;
                    }
                }
            });

            MetricsRow& row = cell.row;
            row.attack = std::string(to_string(kind));
            row.iterations = r;
            row.samples = m;
            std::vector<double> inv, acc, cacc, pacc, proj;
            for (const auto& s : cell.samples) {
                inv.push_back(s.invalid);
                acc.push_back(s.correct);
                cacc.push_back(s.constrained_correct);
                pacc.push_back(s.plain_correct);
                if (s.invalid) {
                    ++row.invalid;
                    proj.push_back(s.projection == ProjectionOutcome::projected);
                    if (s.projection == ProjectionOutcome::unsat_within_budget) ++row.unsat;
                }
            }
            row.invalid_rate = mean_of(inv);
            row.model_accuracy = mean_of(acc);
            row.constrained_accuracy = mean_of(cacc);
            row.projected_plain_accuracy = mean_of(pacc);
            row.projection_success_rate = proj.empty() ? 1.0 : mean_of(proj);
            const std::uint64_t base = config.seed * 1000003ULL + static_cast<std::uint64_t>(kind) * 7919ULL + r * 31ULL;
            row.invalid_ci = bootstrap_half_width(inv, config.bootstrap, base + 1);
            row.model_accuracy_ci = bootstrap_half_width(acc, config.bootstrap, base + 2);
            row.constrained_accuracy_ci = bootstrap_half_width(cacc, config.bootstrap, base + 3);
            row.projection_success_ci = bootstrap_half_width(proj, config.bootstrap, base + 4);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

std::vector<MetricsRow> run_experiment(const PreparedExperiment& prepared, const ExperimentConfig& config) {
    std::vector<MetricsRow> rows;
    for (auto& c : run_cells(prepared, config)) rows.push_back(std::move(c.row));
    return rows;
}

std::vector<MetricsRow> run_experiment(const Dataset& raw, const ExperimentConfig& config) {
    return run_experiment(prepare_experiment(raw, config), config);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "attack,iterations,samples,invalid_rate,invalid_ci,model_accuracy,model_accuracy_ci,"
           "constrained_accuracy,constrained_accuracy_ci,projected_plain_accuracy,projection_success_rate,"
           "projection_success_ci,invalid,unsat\n";
    for (const auto& r : rows)
        out << r.attack << ',' << r.iterations << ',' << r.samples << ',' << fixed6(r.invalid_rate) << ','
            << fixed6(r.invalid_ci) << ',' << fixed6(r.model_accuracy) << ',' << fixed6(r.model_accuracy_ci) << ','
            << fixed6(r.constrained_accuracy) << ',' << fixed6(r.constrained_accuracy_ci) << ','
            << fixed6(r.projected_plain_accuracy) << ',' << fixed6(r.projection_success_rate) << ','
            << fixed6(r.projection_success_ci) << ',' << r.invalid << ',' << r.unsat << '\n';
}

std::string DriftReport::to_json() const {
    nlohmann::json j;
    j["total"] = total;
    j["violations"] = violations;
    j["rate"] = rate;
    j["clause_count"] = clause_count;
    j["violating_rows"] = violating_rows;
    return j.dump(2);
}

DriftReport drift_check(const Theory& theory, const Dataset& test) {
    if (test.schema.fingerprint() != theory.fingerprint())
        throw ValidationError("theory was learned under a different schema than the test data");
    DriftReport r;
    r.total = test.size();
    r.clause_count = theory.clause_count();
    for (std::size_t i = 0; i < test.size(); ++i)
        if (!certifies(theory, to_codes(test.schema, test.rows[i]))) r.violating_rows.push_back(i);
    r.violations = r.violating_rows.size();
    r.rate = r.total == 0 ? 0.0 : static_cast<double>(r.violations) / static_cast<double>(r.total);
    return r;
}

std::vector<BenchCell> bench_learning(const BenchConfig& config) {
    if (config.repetitions == 0) throw ValidationError("bench needs at least one repetition");
    std::vector<BenchCell> cells;
    for (const auto& universe : config.universes) {
        for (std::size_t samples : config.sample_counts) {
            BenchCell cell;
            cell.samples = samples;
            cell.domain_product = 1.0;
            for (auto u : universe) cell.domain_product *= static_cast<double>(u);
            SpaceOptions options;
            options.k = 1;
            options.clause_cap = config.clause_cap;
            if (estimate_space(universe, options) > config.clause_cap) {
                cell.skipped = true;
                cell.note = "clause space above cap";
                cells.push_back(cell);
                continue;
            }
            std::mt19937_64 rng(config.seed + samples * 131 + static_cast<std::uint64_t>(cell.domain_product));
            std::vector<CodeVector> obs(samples, CodeVector(universe.size()));
            for (auto& o : obs)
                for (std::size_t f = 0; f < universe.size(); ++f)
                    o[f] = std::uniform_int_distribution<Code>(0, universe[f] - 1)(rng);
            std::vector<double> times;
            for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                const Theory t = learn_theory(universe, options, obs, 0, config.threads);
                const auto t1 = std::chrono::steady_clock::now();
                if (t.clause_count() > static_cast<std::size_t>(cell.domain_product)) throw Error("bench: impossible clause count");
                times.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            cell.seconds = quantile_sorted(times, 0.5);
            cell.normalized = cell.seconds / (static_cast<double>(samples) * cell.domain_product);
            cells.push_back(cell);
        }
    }
    return cells;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchCell>& cells) {
    out << "samples,domain_product,seconds,normalized,skipped,note\n";
    for (const auto& c : cells)
        out << c.samples << ',' << static_cast<std::uint64_t>(c.domain_product) << ',' << sci(c.seconds) << ','
            << sci(c.normalized) << ',' << (c.skipped ? 1 : 0) << ',' << c.note << '\n';
}

std::vector<FeatureSatisfaction> clause_satisfaction_chart(const Theory& theory, const FeatureSchema& schema,
                                                           std::span<const CodeVector> batch, std::size_t resamples,
                                                           std::uint64_t seed) {
    if (batch.empty()) throw ValidationError("clause satisfaction chart needs a non-empty batch");
    if (schema.size() != theory.feature_count()) throw ValidationError("schema does not match the theory");
    std::vector<std::vector<double>> per_feature(schema.size());
    for (const auto& codes : batch) {
        const auto counts = clause_satisfaction_counts(theory, codes);
        for (std::size_t f = 0; f < counts.size(); ++f) per_feature[f].push_back(static_cast<double>(counts[f]));
    }
    std::vector<FeatureSatisfaction> out;
    for (std::size_t f = 0; f < schema.size(); ++f)
        out.push_back({schema.feature(f).name, mean_of(per_feature[f]),
                       bootstrap_half_width(per_feature[f], resamples, seed + f)});
    return out;
}

void write_satisfaction_csv(std::ostream& out, const std::vector<FeatureSatisfaction>& rows) {
    out << "feature,mean_satisfied,ci_half_width\n";
    for (const auto& r : rows) out << r.feature << ',' << fixed6(r.mean) << ',' << fixed6(r.ci_half_width) << '\n';
}

std::string gnuplot_script(const std::string& metrics_csv) {
    std::ostringstream s;
    s << "set datafile separator ','\n"
      << "set key outside\n"
      << "set xlabel 'attack iterations'\n"
      << "set ylabel 'rate'\n"
      << "set yrange [0:1]\n"
      << "set terminal pngcairo size 900,500\n"
      << "set output 'metrics.png'\n"
      << "plot for [a in 'pgd csp'] '" << metrics_csv
      << "' using 2:(strcol(1) eq a ? $4 : 1/0) with linespoints title a.' invalid', \\\n"
      << "     for [a in 'pgd csp'] '" << metrics_csv
      << "' using 2:(strcol(1) eq a ? $6 : 1/0) with linespoints title a.' accuracy', \\\n"
      << "     for [a in 'pgd csp'] '" << metrics_csv
      << "' using 2:(strcol(1) eq a ? $8 : 1/0) with linespoints title a.' constrained accuracy'\n";
    return s.str();
}

} // namespace cadv
