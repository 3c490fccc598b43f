#pragma once

#include "cadv/dataset.hpp"
#include "cadv/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace cadv {

// Adversarial feature bounds of one class on one feature: [lo, hi] for
// continuous features, the admissible value indices for discrete ones.
struct FeatureBounds {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<bool> allowed;
};

class ClassBounds {
public:
    ClassBounds() = default;
    explicit ClassBounds(std::vector<std::vector<FeatureBounds>> per_class) : per_class_(std::move(per_class)) {}

    std::size_t class_count() const { return per_class_.size(); }
    const std::vector<FeatureBounds>& of(std::size_t cls) const { return per_class_.at(cls); }
    const FeatureBounds& at(std::size_t cls, std::size_t feature) const { return per_class_.at(cls).at(feature); }

private:
    std::vector<std::vector<FeatureBounds>> per_class_;
};

// Exact per-class minima/maxima and value sets of the rows. Throws
// ValidationError when a class of the schema has no rows.
ClassBounds learn_class_bounds(const Dataset& data);

bool within_bounds(const FeatureSchema& schema, const ClassBounds& bounds, std::size_t cls, const Observation& row);

enum class AttackKind { pgd, csp };
std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);

struct AttackConfig {
    double step = 0.01;
    std::size_t iterations = 35;
    bool targeted = false;
    std::optional<std::size_t> target;
    std::uint64_t seed = 0;
};

struct AttackResult {
    Eigen::VectorXd adversarial;
    // trace[r] is the point after r iterations; trace[0] is the input. After an
    // early stop the last point repeats up to config.iterations.
    std::vector<Eigen::VectorXd> trace;
    std::size_t iterations_run = 0;
    bool saturated = false;  // all-zero saliency at the first iteration
};

// Box and value sets an attack on a sample of class `cls` may move within:
// the class bounds and [0, 1], each widened to contain x0 itself.
struct AttackBox {
    Eigen::VectorXd lo, hi;                // per column (continuous columns only)
    std::vector<std::vector<bool>> allowed;  // per feature (discrete only)
};
AttackBox attack_box(const FeatureSchema& schema, const Encoding& encoding, const ClassBounds& bounds, std::size_t cls,
                     const Eigen::VectorXd& x0);
bool inside_box(const Encoding& encoding, const AttackBox& box, const Eigen::VectorXd& x);

AttackResult pgd(const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding, const Eigen::VectorXd& x,
                 std::size_t y, const AttackConfig& config, const ClassBounds& bounds);

// S_i = 0 when sign J[yhat,i] == sign(sum_{j != yhat} J[j,i]), otherwise
// J[yhat,i] * |sum_{j != yhat} J[j,i]|. sign(0) is 0.
Eigen::VectorXd saliency_map(std::size_t yhat, const Eigen::MatrixXd& jacobian);

AttackResult csp_attack(const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding,
                        const Eigen::VectorXd& x, std::size_t y, const AttackConfig& config, const ClassBounds& bounds);

AttackResult run_attack(AttackKind kind, const MlpModel& model, const FeatureSchema& schema, const Encoding& encoding,
                        const Eigen::VectorXd& x, std::size_t y, const AttackConfig& config, const ClassBounds& bounds);

// One attack per row of x, parallel over samples; results in row order.
std::vector<AttackResult> attack_batch(AttackKind kind, const MlpModel& model, const FeatureSchema& schema,
                                       const Encoding& encoding, const Eigen::MatrixXd& x,
                                       const std::vector<std::size_t>& labels, const AttackConfig& config,
                                       const ClassBounds& bounds, std::size_t threads = 1);

} // namespace cadv
