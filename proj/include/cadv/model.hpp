#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace cadv {

enum class Activation { relu, tanh, sigmoid };

struct TrainConfig {
    std::vector<std::size_t> hidden{60, 32};
    double learning_rate = 1e-3;
    std::size_t epochs = 16;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    Activation activation = Activation::relu;
};

// Fully connected network with a softmax head. Layer l maps
// weights[l] (out x in) * h + biases[l]; hidden layers apply the activation.
class MlpModel {
public:
    MlpModel() = default;
    MlpModel(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes, Activation activation);

    std::size_t input_size() const { return weights_.empty() ? 0 : static_cast<std::size_t>(weights_.front().cols()); }
    std::size_t class_count() const { return weights_.empty() ? 0 : static_cast<std::size_t>(weights_.back().rows()); }
    Activation activation() const { return activation_; }
    std::size_t layer_count() const { return weights_.size(); }

    std::vector<Eigen::MatrixXd>& weights() { return weights_; }
    std::vector<Eigen::VectorXd>& biases() { return biases_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

    Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
    Eigen::VectorXd predict(const Eigen::VectorXd& x) const;  // class probabilities
    std::size_t classify(const Eigen::VectorXd& x) const;

    // d(cross-entropy of class `label`)/dx, by reverse-mode backpropagation.
    Eigen::VectorXd input_gradient(const Eigen::VectorXd& x, std::size_t label) const;

    // d logits / dx (classes x inputs), by forward-mode propagation.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

    // Pre-activations of every hidden layer (for kink checks in tests).
    std::vector<Eigen::VectorXd> hidden_preactivations(const Eigen::VectorXd& x) const;

private:
    void check_input(const Eigen::VectorXd& x) const;

    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
    Activation activation_ = Activation::relu;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct TrainResult {
    MlpModel model;
    double train_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

// Mini-batch ADAM (0.9 / 0.999 / 1e-8) on mean cross-entropy. Deterministic for
// a given seed.
TrainResult train(const Eigen::MatrixXd& x, std::span<const std::size_t> labels, std::size_t classes,
                  const TrainConfig& config);

double accuracy(const MlpModel& model, const Eigen::MatrixXd& x, std::span<const std::size_t> labels);

// Binary format: magic "CADVMLP", version byte, activation, layer shapes, then
// row-major doubles per layer (weights, biases).
void save_model(const MlpModel& model, std::ostream& out);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(std::istream& in);
MlpModel load_model(const std::filesystem::path& path);

} // namespace cadv
