// cadv: learn constraint theories, craft adversarial examples and project them.

#include "cadv/analysis.hpp"
#include "cadv/attacks.hpp"
#include "cadv/dataset.hpp"
#include "cadv/discretizer.hpp"
#include "cadv/error.hpp"
#include "cadv/evaluation.hpp"
#include "cadv/model.hpp"
#include "cadv/projector.hpp"
#include "cadv/theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cadv;

namespace {

struct Global {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out;
};

// Writes to --out when given, stdout otherwise.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
            file_.open(path);
            if (!file_) throw ValidationError("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

std::string require_out(const Global& g, const char* what) {
    if (g.out.empty()) throw ValidationError(std::string("--out is required to write the ") + what);
    if (fs::path(g.out).has_parent_path()) fs::create_directories(fs::path(g.out).parent_path());
    return g.out;
}

bool has_ranges(const FeatureSchema& schema) {
    for (const auto& f : schema.features())
        if (!f.discrete() && !f.range) return false;
    return true;
}

// Train/test split normalized with the schema ranges when present, otherwise
// with statistics fitted on the train part.
std::pair<Dataset, Dataset> normalized_split(const Dataset& raw, double test_fraction, std::uint64_t seed) {
    auto [train, test] = split(raw, test_fraction, seed);
    if (has_ranges(raw.schema)) {
        const auto params = params_from_schema(raw.schema);
        return {apply_normalization(train, params), apply_normalization(test, params)};
    }
    auto norm = normalize(train);
    return {norm.data, apply_normalization(test, norm.params)};
}

Dataset normalized_all(const Dataset& raw) {
    if (!has_ranges(raw.schema)) return normalize(raw).data;
    return apply_normalization(raw, params_from_schema(raw.schema));
}

std::vector<CodeVector> distinct_codes(const Dataset& data) {
    const auto codes = to_codes(data);
    const std::set<CodeVector> s(codes.begin(), codes.end());
    return {s.begin(), s.end()};
}

CardinalityMode parse_mode(const std::string& s) {
    if (s == "at-most" || s == "at_most") return CardinalityMode::at_most;
    if (s == "exactly") return CardinalityMode::exactly;
    throw ValidationError("unknown cardinality mode '" + s + "' (expected at-most or exactly)");
}

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw ValidationError("expected a comma-separated list of integers, got '" + text + "'");
        }
    }
    return out;
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn domain constraint theories, craft adversarial examples and project them onto the theory"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "Seed for splits, training, sampling and bootstrap")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file (directory for synth); stdout when omitted");

    std::string data_path, schema_path, theory_path, model_path;
    double test_fraction = 0.3;
    auto add_data = [&](CLI::App* sub, bool required) {
        auto* d = sub->add_option("--data", data_path, "CSV file (header: features..., label)")->check(CLI::ExistingFile);
        auto* s = sub->add_option("--schema", schema_path, "Schema JSON")->check(CLI::ExistingFile);
        if (required) {
            d->required();
            s->required();
        }
        sub->add_option("--test-fraction", test_fraction, "Held-out fraction of the stratified split")->capture_default_str();
    };

    // synth
    SynthConfig synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a planted constrained dataset (data.csv, schema.json)");
    c_synth->add_option("--rows", synth.rows)->capture_default_str();
    c_synth->add_option("--categorical", synth.categorical)->capture_default_str();
    c_synth->add_option("--boolean", synth.boolean)->capture_default_str();
    c_synth->add_option("--continuous", synth.continuous)->capture_default_str();
    c_synth->add_option("--clusters", synth.clusters)->capture_default_str();
    c_synth->add_option("--planted-clauses", synth.planted_clauses)->capture_default_str();
    c_synth->add_option("--literals", synth.literals_per_clause, "Literals per planted clause")->capture_default_str();
    c_synth->add_option("--classes", synth.classes)->capture_default_str();

    // discretize
    DiscretizerConfig disc;
    auto* c_disc = app.add_subcommand("discretize", "Normalize on the train split and bin continuous features with OPTICS");
    add_data(c_disc, true);
    c_disc->add_option("--min-pts", disc.min_pts)->capture_default_str();
    c_disc->add_option("--quantile", disc.extraction.threshold_quantile, "Reachability quantile for bin boundaries")
        ->capture_default_str();
    c_disc->add_option("--gap-ratio", disc.extraction.min_gap_ratio, "Boundary reachability over local median")
        ->capture_default_str();
    c_disc->add_option("--subsample", disc.subsample, "Fraction of rows fed to OPTICS")->capture_default_str();
    c_disc->add_flag("--open-ends", disc.extraction.open_ends, "Clamp out-of-range values into the end bins");

    // learn
    SpaceOptions space;
    std::string mode_text = "at-most";
    bool print_text = false;
    auto* c_learn = app.add_subcommand("learn", "Learn a k-CNF constraint theory from the train split");
    add_data(c_learn, true);
    c_learn->add_option("--k", space.k, "Cardinality bound")->capture_default_str();
    c_learn->add_option("--mode", mode_text, "Literal sizes: at-most (1..k) or exactly (k)")->capture_default_str();
    c_learn->add_option("--cap", space.clause_cap, "Clause space cap")->capture_default_str();
    c_learn->add_flag("--text", print_text, "Also print the theory as text on stderr");

    // train
    TrainConfig tc;
    std::string hidden_text = "60,32";
    auto* c_train = app.add_subcommand("train", "Train the MLP on the train split");
    add_data(c_train, true);
    c_train->add_option("--hidden", hidden_text, "Hidden layer widths")->capture_default_str();
    c_train->add_option("--epochs", tc.epochs)->capture_default_str();
    c_train->add_option("--lr", tc.learning_rate)->capture_default_str();
    c_train->add_option("--batch", tc.batch_size)->capture_default_str();

    // attack / project
    AttackConfig ac;
    std::string attack_text = "pgd";
    std::size_t target = 0;
    std::size_t limit = 0;
    double phi = 20.0;
    auto* c_attack = app.add_subcommand("attack", "Attack the test split; JSON lines per iteration");
    auto* c_project = app.add_subcommand("project", "Attack the test split and project the results; JSON lines");
    for (auto* sub : {c_attack, c_project}) {
        add_data(sub, true);
        sub->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--attack", attack_text, "pgd or csp")->capture_default_str();
        sub->add_option("--iterations", ac.iterations)->capture_default_str();
        sub->add_option("--step", ac.step)->capture_default_str();
        sub->add_option("--target", target, "Target class index (targeted attack)");
        sub->add_option("--limit", limit, "Attack only the first N test rows");
    }
    c_project->add_option("--theory", theory_path)->required()->check(CLI::ExistingFile);
    c_project->add_option("--phi", phi, "Percent of features DPLL may reassign")->capture_default_str();

    // evaluate
    ExperimentConfig ec;
    std::string iter_text = "1,5,10,15,20,25,30,35";
    std::string attacks_text = "pgd,csp";
    std::string gnuplot_path, chart_path;
    auto* c_eval = app.add_subcommand("evaluate", "Run the full measurement protocol; metrics CSV");
    add_data(c_eval, false);
    c_eval->add_option("--iterations", iter_text, "Iteration grid")->capture_default_str();
    c_eval->add_option("--attacks", attacks_text)->capture_default_str();
    c_eval->add_option("--phi", ec.phi)->capture_default_str();
    c_eval->add_option("--k", ec.k)->capture_default_str();
    c_eval->add_option("--step", ec.step)->capture_default_str();
    c_eval->add_option("--max-samples", ec.max_test_samples, "Attack at most N test rows (0 = all)")->capture_default_str();
    c_eval->add_option("--bootstrap", ec.bootstrap)->capture_default_str();
    c_eval->add_option("--epochs", ec.train.epochs)->capture_default_str();
    c_eval->add_option("--gnuplot", gnuplot_path, "Also write a gnuplot script here");
    c_eval->add_option("--chart", chart_path, "Also write per-feature clause satisfaction of the final adversarial batches");

    // drift
    bool drift_all = false;
    auto* c_drift = app.add_subcommand("drift", "Count test observations the theory rejects; JSON report");
    add_data(c_drift, true);
    c_drift->add_option("--theory", theory_path)->required()->check(CLI::ExistingFile);
    c_drift->add_flag("--all", drift_all, "Check every row instead of the test split");

    // bench
    BenchConfig bc;
    std::string base_universe = "8,8,8,8";
    std::size_t bench_samples = 20000;
    auto* c_bench = app.add_subcommand("bench", "Time k=1 learning at |E| and 2|E| on a schema and its doubled product");
    c_bench->add_option("--universe", base_universe, "Per-feature value counts")->capture_default_str();
    c_bench->add_option("--samples", bench_samples)->capture_default_str();
    c_bench->add_option("--repetitions", bc.repetitions)->capture_default_str();

    // analyze
    std::size_t k_max = 0;
    std::string classify_text;
    auto* c_analyze = app.add_subcommand("analyze", "Exhaustive reject-set analysis on small domains; JSON report");
    add_data(c_analyze, true);
    c_analyze->add_option("--k-max", k_max, "Largest k for the nesting chain (default max|X_i|-1)");
    c_analyze->add_option("--classify", classify_text, "Feature pair a,b (names) to classify under the k=1 theory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_synth) {
            synth.seed = g.seed;
            const auto dom = synthesize(synth);
            const fs::path dir = g.out.empty() ? fs::path("synth") : fs::path(g.out);
            fs::create_directories(dir);
            std::ofstream csv(dir / "data.csv");
            write_csv(csv, dom.data);
            save_schema(dom.data.schema, dir / "schema.json");
            std::ofstream planted(dir / "planted.txt");
            planted << theory_to_text(dom.planted);
            std::cerr << "wrote " << dom.data.size() << " rows to " << dir.string() << "\n";
            return 0;
        }

        const Dataset raw = data_path.empty() ? Dataset{} : load_csv(data_path, schema_path);

        if (*c_disc) {
            auto [train, test] = split(raw, test_fraction, g.seed);
            auto norm = normalize(train);
            for (const auto& w : norm.params.warnings)
                std::cerr << "warning: feature '" << w << "' is constant on the train split\n";
            disc.seed = g.seed;
            const FeatureSchema binned = discretize(norm.data, disc);
            const std::string path = require_out(g, "binned schema");
            save_schema(binned, path);
            for (const auto& f : binned.features())
                if (!f.discrete()) std::cerr << f.name << ": " << f.bins->size() << " bins\n";
            return 0;
        }

        if (*c_learn) {
            space.mode = parse_mode(mode_text);
            auto [train, test] = normalized_split(raw, test_fraction, g.seed);
            const auto codes = distinct_codes(train);
            const Theory t = learn_theory(train.schema, space, codes, g.threads);
            save_theory(t, require_out(g, "theory"));
            std::cerr << "learned " << t.clause_count() << " clauses from " << codes.size() << " distinct observations\n";
            if (print_text) std::cerr << theory_to_text(t, &train.schema);
            return 0;
        }

        if (*c_train) {
            tc.hidden = parse_list(hidden_text);
            tc.seed = g.seed;
            auto [train_set, test_set] = normalized_split(raw, test_fraction, g.seed);
            const Encoding enc(train_set.schema);
            const auto tr = encode(train_set, enc);
            const auto te = encode(test_set, enc);
            const auto result = train(tr.x, tr.labels, train_set.schema.class_count(), tc);
            save_model(result.model, require_out(g, "model"));
            json report;
            report["train_accuracy"] = result.train_accuracy;
            report["test_accuracy"] = accuracy(result.model, te.x, te.labels);
            report["epoch_loss"] = result.epoch_loss;
            std::cout << report.dump(2) << "\n";
            return 0;
        }

        if (*c_attack || *c_project) {
            const AttackKind kind = parse_attack_kind(attack_text);
            const auto* sub = *c_attack ? c_attack : c_project;
            if (sub->count("--target") > 0) {
                ac.targeted = true;
                ac.target = target;
            }
            ac.seed = g.seed;
            auto [train_set, test_set] = normalized_split(raw, test_fraction, g.seed);
            const FeatureSchema& schema = train_set.schema;
            const MlpModel model = load_model(model_path);
            const Encoding enc(schema);
            const ClassBounds bounds = learn_class_bounds(train_set);
            if (limit > 0 && limit < test_set.size()) test_set.rows.resize(limit);
            const auto te = encode(test_set, enc);
            const auto results = attack_batch(kind, model, schema, enc, te.x, te.labels, ac, bounds, g.threads);
            Output out(g.out);
            if (*c_attack) {
                for (std::size_t i = 0; i < results.size(); ++i)
                    for (std::size_t r = 0; r < results[i].trace.size(); ++r) {
                        json line;
                        line["sample"] = i;
                        line["iteration"] = r;
                        line["vector"] = vector_json(results[i].trace[r]);
                        line["prediction"] = model.classify(results[i].trace[r]);
                        out.stream() << line.dump() << "\n";
                    }
                return 0;
            }
            const Theory theory = load_theory(theory_path);
            for (std::size_t i = 0; i < results.size(); ++i) {
                Observation obs = enc.decode(results[i].adversarial);
                obs.label = te.labels[i];
                const auto pr = project(theory, schema, obs, phi, bounds, te.labels[i]);
                json line;
                line["sample"] = i;
                line["outcome"] = std::string(to_string(pr.outcome));
                json changed = json::array();
                for (auto f : pr.changed) changed.push_back(schema.feature(f).name);
                line["changed"] = changed;
                line["certified_before"] = pr.certified_before;
                line["certified_after"] = pr.certified_after;
                line["prediction_before"] = model.classify(results[i].adversarial);
                line["prediction_after"] = model.classify(enc.encode(pr.repaired));
                out.stream() << line.dump() << "\n";
            }
            return 0;
        }

        if (*c_eval) {
            ec.seed = g.seed;
            ec.threads = g.threads;
            ec.test_fraction = test_fraction;
            ec.iterations = parse_list(iter_text);
            ec.attacks.clear();
            std::stringstream ss(attacks_text);
            for (std::string a; std::getline(ss, a, ',');)
                if (!a.empty()) ec.attacks.push_back(parse_attack_kind(a));
            Dataset input = raw;
            if (data_path.empty()) {
                SynthConfig sc;
                sc.seed = g.seed;
                input = synthesize(sc).data;
                std::cerr << "no --data given; using a synthetic planted domain\n";
            }
            const auto prepared = prepare_experiment(input, ec);
            std::cerr << "theory: " << prepared.theory.clause_count() << " clauses; clean test accuracy "
                      << prepared.clean_accuracy << "\n";
            const auto rows = run_experiment(prepared, ec);
            Output out(g.out);
            write_metrics_csv(out.stream(), rows);
            if (!gnuplot_path.empty()) {
                std::ofstream gp(gnuplot_path);
                gp << gnuplot_script(g.out.empty() ? "metrics.csv" : g.out);
            }
            if (!chart_path.empty()) {
                std::ofstream chart(chart_path);
                chart << "attack,feature,mean_satisfied,ci_half_width\n";
                const auto te = encode(prepared.test, prepared.encoding);
                AttackConfig cfg;
                cfg.step = ec.step;
                cfg.iterations = std::max<std::size_t>(1, ec.iterations.back());
                for (AttackKind kind : ec.attacks) {
                    const auto results = attack_batch(kind, prepared.model, prepared.test.schema, prepared.encoding, te.x,
                                                      te.labels, cfg, prepared.bounds, g.threads);
                    std::vector<CodeVector> batch;
                    for (const auto& r : results) batch.push_back(to_codes(prepared.test.schema, prepared.encoding.decode(r.adversarial)));
                    for (const auto& f : clause_satisfaction_chart(prepared.theory, prepared.test.schema, batch, ec.bootstrap, g.seed))
                        chart << to_string(kind) << ',' << f.feature << ',' << f.mean << ',' << f.ci_half_width << '\n';
                }
            }
            return 0;
        }

        if (*c_drift) {
            const Theory theory = load_theory(theory_path);
            Dataset checked;
            if (drift_all) {
                checked = normalized_all(raw);
            } else {
                checked = normalized_split(raw, test_fraction, g.seed).second;
            }
            Output out(g.out);
            out.stream() << drift_check(theory, checked).to_json() << "\n";
            return 0;
        }

        if (*c_bench) {
            const auto base = parse_list(base_universe);
            if (base.empty()) throw ValidationError("--universe needs at least one feature");
            std::vector<std::uint32_t> u(base.begin(), base.end()), doubled = u;
            doubled[0] *= 2;
            bc.universes = {u, doubled};
            bc.sample_counts = {bench_samples, 2 * bench_samples};
            bc.seed = g.seed;
            bc.threads = g.threads;
            Output out(g.out);
            write_bench_csv(out.stream(), bench_learning(bc));
            return 0;
        }

        if (*c_analyze) {
            const Dataset all = normalized_all(raw);
            const auto codes = distinct_codes(all);
            const auto universe = all.schema.universe_sizes();
            json report;
            const std::uint32_t largest = *std::max_element(universe.begin(), universe.end());
            const std::size_t kmax = k_max > 0 ? k_max : std::max<std::uint32_t>(1, largest - 1);
            report["nesting"] = json::parse(check_nesting(universe, codes, kmax).to_json());
            const bool all_binary_plus = std::all_of(universe.begin(), universe.end(), [](auto u) { return u >= 2; });
            if (all_binary_plus) report["memorization"] = check_memorization(universe, codes);
            if (!classify_text.empty()) {
                const auto comma = classify_text.find(',');
                if (comma == std::string::npos) throw ValidationError("--classify expects two feature names a,b");
                const auto a = all.schema.feature_index(classify_text.substr(0, comma));
                const auto b = all.schema.feature_index(classify_text.substr(comma + 1));
                if (!a || !b) throw ValidationError("--classify names an unknown feature");
                const Theory t = learn_theory(all.schema, SpaceOptions{}, codes, g.threads);
                json cls = json::array();
                for (const auto& vc : classify_constraints(t, *a, *b)) {
                    json item;
                    item["value"] = vc.value;
                    item["partners"] = vc.partners;
                    item["kind"] = std::string(to_string(vc.kind));
                    cls.push_back(item);
                }
                report["classification"] = cls;
            }
            Output out(g.out);
            out.stream() << report.dump(2) << "\n";
            return 0;
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
