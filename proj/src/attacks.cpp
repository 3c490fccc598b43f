#include "cadv/attacks.hpp"

#include "cadv/error.hpp"
#include "cadv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cadv {

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Active category of a one-hot group (argmax, lowest index on ties).
std::size_t active_category(const Eigen::VectorXd& x, const Encoding::Group& g) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < g.width; ++c)
        if (x[static_cast<Eigen::Index>(g.first_column + c)] > x[static_cast<Eigen::Index>(g.first_column + best)])
            best = c;
    return best;
}

std::size_t current_value(const Eigen::VectorXd& x, const Encoding::Group& g) {
    if (g.kind == FeatureKind::boolean) return x[static_cast<Eigen::Index>(g.first_column)] >= 0.5 ? 1 : 0;
    return active_category(x, g);
}

void set_value(Eigen::VectorXd& x, const Encoding::Group& g, std::size_t value) {
    if (g.kind == FeatureKind::boolean) {
        x[static_cast<Eigen::Index>(g.first_column)] = static_cast<double>(value);
        return;
    }
    for (std::size_t c = 0; c < g.width; ++c) x[static_cast<Eigen::Index>(g.first_column + c)] = c == value ? 1.0 : 0.0;
}

void check_attack(const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding,
                  const Eigen::VectorXd& x, std::size_t y, const AttackConfig& config, const ClassBounds& bounds) {
    if (!(config.step > 0.0)) throw ValidationError("attack step must be positive");
    if (config.iterations < 1) throw ValidationError("attack needs at least one iteration");
    if (static_cast<std::size_t>(x.size()) != encoding.width() || model.input_size() != encoding.width())
        throw ValidationError("attack input width does not match the encoding/model");
    if (y >= model.class_count() || y >= bounds.class_count()) throw ValidationError("attack label out of range");
    if (encoding.feature_count() != schema.size()) throw ValidationError("encoding does not match schema");
    if (config.targeted && (!config.target || *config.target >= model.class_count()))
        throw ValidationError("targeted attack needs a valid target class");
}

void pad_trace(AttackResult& result, std::size_t iterations) {
    while (result.trace.size() < iterations + 1) result.trace.push_back(result.trace.back());
    result.adversarial = result.trace.back();
}

} // namespace

ClassBounds learn_class_bounds(const Dataset& data) {
    const auto& schema = data.schema;
    const std::size_t classes = schema.class_count();
    std::vector<std::vector<FeatureBounds>> per(classes, std::vector<FeatureBounds>(schema.size()));
    std::vector<std::size_t> rows_of(classes, 0);
    for (auto& cls : per)
        for (std::size_t f = 0; f < schema.size(); ++f) {
            cls[f].lo = std::numeric_limits<double>::infinity();
            cls[f].hi = -std::numeric_limits<double>::infinity();
            if (schema.feature(f).discrete()) cls[f].allowed.assign(schema.feature(f).values.size(), false);
        }
    for (const auto& row : data.rows) {
        if (!row.label) throw ValidationError("class bounds need labeled rows");
        auto& cls = per.at(*row.label);
        ++rows_of[*row.label];
        for (std::size_t f = 0; f < schema.size(); ++f) {
            const double v = row.values[f];
            cls[f].lo = std::min(cls[f].lo, v);
            cls[f].hi = std::max(cls[f].hi, v);
            if (schema.feature(f).discrete()) cls[f].allowed.at(static_cast<std::size_t>(v)) = true;
        }
    }
    for (std::size_t c = 0; c < classes; ++c)
        if (rows_of[c] == 0) throw ValidationError("class '" + schema.classes()[c] + "' has no rows to derive bounds from");
    return ClassBounds(std::move(per));
}

bool within_bounds(const FeatureSchema& schema, const ClassBounds& bounds, std::size_t cls, const Observation& row) {
    for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& b = bounds.at(cls, f);
        const double v = row.values[f];
        if (schema.feature(f).discrete()) {
            const auto idx = static_cast<std::size_t>(v);
            if (idx >= b.allowed.size() || !b.allowed[idx]) return false;
        } else if (v < b.lo || v > b.hi) {
            return false;
        }
    }
    return true;
}

std::string_view to_string(AttackKind kind) { return kind == AttackKind::pgd ? "pgd" : "csp"; }

AttackKind parse_attack_kind(std::string_view text) {
    if (text == "pgd") return AttackKind::pgd;
    if (text == "csp") return AttackKind::csp;
    throw ValidationError("unknown attack '" + std::string(text) + "' (expected pgd or csp)");
}

AttackBox attack_box(const FeatureSchema& schema, const Encoding& encoding, const ClassBounds& bounds, std::size_t cls,
                     const Eigen::VectorXd& x0) {
    AttackBox box;
    box.lo = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(encoding.width()));
    box.hi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(encoding.width()));
    box.allowed.resize(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& g = encoding.group(f);
        const auto& b = bounds.at(cls, f);
        if (g.kind == FeatureKind::continuous) {
            const auto c = static_cast<Eigen::Index>(g.first_column);
            const double v = x0[c];
            box.lo[c] = std::max(std::min(b.lo, v), std::min(0.0, v));
            box.hi[c] = std::min(std::max(b.hi, v), std::max(1.0, v));
        } else {
            box.allowed[f] = b.allowed;
            box.allowed[f].at(current_value(x0, g)) = true;
        }
    }
    return box;
}

bool inside_box(const Encoding& encoding, const AttackBox& box, const Eigen::VectorXd& x) {
    for (std::size_t f = 0; f < encoding.feature_count(); ++f) {
        const auto& g = encoding.group(f);
        if (g.kind == FeatureKind::continuous) {
            const auto c = static_cast<Eigen::Index>(g.first_column);
            if (x[c] < box.lo[c] || x[c] > box.hi[c]) return false;
        } else if (!box.allowed[f][current_value(x, g)]) {
            return false;
        }
    }
    return true;
}

AttackResult pgd(const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding, const Eigen::VectorXd& x,
                 std::size_t y, const AttackConfig& config, const ClassBounds& bounds) {
    check_attack(model, schema, encoding, x, y, config, bounds);
    const AttackBox box = attack_box(schema, encoding, bounds, y, x);
    AttackResult result;
    result.trace.reserve(config.iterations + 1);
    result.trace.push_back(x);
    Eigen::VectorXd cur = x;
    for (std::size_t r = 1; r <= config.iterations; ++r) {
        // direction that raises the loss of y (untargeted) or lowers it for the target
        const Eigen::VectorXd d =
            config.targeted ? Eigen::VectorXd(-model.input_gradient(cur, *config.target)) : model.input_gradient(cur, y);

        double best_benefit = 0.0;
        std::size_t best_feature = 0, best_value = 0;
        bool have_move = false;
        for (std::size_t f = 0; f < encoding.feature_count(); ++f) {
            const auto& g = encoding.group(f);
            if (g.kind == FeatureKind::continuous) {
                const auto c = static_cast<Eigen::Index>(g.first_column);
                cur[c] = std::clamp(cur[c] + config.step * sign(d[c]), box.lo[c], box.hi[c]);
                continue;
            }
            const std::size_t a = current_value(cur, g);
            for (std::size_t v = 0; v < box.allowed[f].size(); ++v) {
                if (v == a || !box.allowed[f][v]) continue;
                double benefit;
                if (g.kind == FeatureKind::boolean)
                    benefit = d[static_cast<Eigen::Index>(g.first_column)] * (1.0 - 2.0 * static_cast<double>(a));
                else
                    benefit = d[static_cast<Eigen::Index>(g.first_column + v)] -
                              d[static_cast<Eigen::Index>(g.first_column + a)];
                if (benefit > best_benefit) {
                    best_benefit = benefit;
                    best_feature = f;
                    best_value = v;
                    have_move = true;
                }
            }
        }
        if (have_move) set_value(cur, encoding.group(best_feature), best_value);
        result.trace.push_back(cur);
        result.iterations_run = r;
    }
    result.adversarial = cur;
    return result;
}

Eigen::VectorXd saliency_map(std::size_t yhat, const Eigen::MatrixXd& jacobian) {
    if (jacobian.rows() < 2) throw ValidationError("saliency map needs a Jacobian with at least two classes");
    if (yhat >= static_cast<std::size_t>(jacobian.rows())) throw ValidationError("saliency target class out of range");
    const auto t = static_cast<Eigen::Index>(yhat);
    Eigen::VectorXd s(jacobian.cols());
    for (Eigen::Index i = 0; i < jacobian.cols(); ++i) {
        const double own = jacobian(t, i);
        double others = 0.0;
        for (Eigen::Index r = 0; r < jacobian.rows(); ++r)
            if (r != t) others += jacobian(r, i);
        s[i] = sign(own) == sign(others) ? 0.0 : own * std::abs(others);
    }
    return s;
}

AttackResult csp_attack(const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding,
                        const Eigen::VectorXd& x, std::size_t y, const AttackConfig& config, const ClassBounds& bounds) {
    check_attack(model, schema, encoding, x, y, config, bounds);
    const AttackBox box = attack_box(schema, encoding, bounds, y, x);
    AttackResult result;
    result.trace.reserve(config.iterations + 1);
    result.trace.push_back(x);
    Eigen::VectorXd cur = x;
    const std::size_t yhat = config.targeted ? *config.target : y;
    for (std::size_t r = 1; r <= config.iterations; ++r) {
        Eigen::MatrixXd j = model.jacobian(cur);
        if (!config.targeted) j = -j;
        const Eigen::VectorXd s = saliency_map(yhat, j);
        if (s.isZero(0.0)) {
            result.saturated = r == 1;
            break;
        }

        // Feasible move with the largest |S|: (feature, new discrete value) or a
        // continuous column step.
        double best = 0.0;
        std::size_t best_feature = 0, best_value = 0;
        Eigen::Index best_column = -1;
        for (Eigen::Index col = 0; col < s.size(); ++col) {
            const double sc = s[col];
            if (sc == 0.0 || std::abs(sc) <= best) continue;
            const std::size_t f = encoding.feature_of_column(static_cast<std::size_t>(col));
            const auto& g = encoding.group(f);
            if (g.kind == FeatureKind::continuous) {
                if ((sc > 0.0 && cur[col] < box.hi[col]) || (sc < 0.0 && cur[col] > box.lo[col])) {
                    best = std::abs(sc);
                    best_column = col;
                    best_feature = f;
                }
                continue;
            }
            const std::size_t a = current_value(cur, g);
            if (g.kind == FeatureKind::boolean) {
                const std::size_t to = sc > 0.0 ? 1 : 0;
                if (to != a && box.allowed[f][to]) {
                    best = std::abs(sc);
                    best_column = col;
                    best_feature = f;
                    best_value = to;
                }
                continue;
            }
            const std::size_t c = static_cast<std::size_t>(col) - g.first_column;
            if (sc > 0.0 && c != a && box.allowed[f][c]) {
                best = std::abs(sc);
                best_column = col;
                best_feature = f;
                best_value = c;
            } else if (sc < 0.0 && c == a) {
                // leave the active category for the most salient allowed other one
                std::optional<std::size_t> pick;
                for (std::size_t o = 0; o < g.width; ++o) {
                    if (o == a || !box.allowed[f][o]) continue;
                    if (!pick || s[static_cast<Eigen::Index>(g.first_column + o)] >
                                     s[static_cast<Eigen::Index>(g.first_column + *pick)])
                        pick = o;
                }
                if (pick) {
                    best = std::abs(sc);
                    best_column = col;
                    best_feature = f;
                    best_value = *pick;
                }
            }
        }
        if (best_column < 0) break;

        const auto& g = encoding.group(best_feature);
        if (g.kind == FeatureKind::continuous)
            cur[best_column] = std::clamp(cur[best_column] + config.step * sign(s[best_column]), box.lo[best_column],
                                          box.hi[best_column]);
        else
            set_value(cur, g, best_value);
        result.trace.push_back(cur);
        result.iterations_run = r;
    }
    pad_trace(result, config.iterations);
    return result;
}

AttackResult run_attack(AttackKind kind, const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding,
                        const Eigen::VectorXd& x, std::size_t y, const AttackConfig& config, const ClassBounds& bounds) {
    return kind == AttackKind::pgd ? pgd(model, schema, encoding, x, y, config, bounds)
                                   : csp_attack(model, schema, encoding, x, y, config, bounds);
}

std::vector<AttackResult> attack_batch(AttackKind kind, const MlpModel& model, const FeatureSchema& schema,
                                       const Encoding& encoding, const Eigen::MatrixXd& x,
                                       const std::vector<std::size_t>& labels, const AttackConfig& config,
                                       const ClassBounds& bounds, std::size_t threads) {
    if (labels.size() != static_cast<std::size_t>(x.rows())) throw ValidationError("attack batch needs one label per row");
    std::vector<AttackResult> out(labels.size());
    parallel_for(labels.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            out[i] = run_attack(kind, model, schema, encoding, x.row(static_cast<Eigen::Index>(i)).transpose(), labels[i],
                                config, bounds);
    });
    return out;
}

} // namespace cadv
