#include "cadv/model.hpp"

#include "cadv/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace cadv {

namespace {

Eigen::VectorXd activate(const Eigen::VectorXd& z, Activation a) {
    switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    return z;
}

// Derivative of the activation at pre-activation z.
Eigen::VectorXd activate_prime(const Eigen::VectorXd& z, Activation a) {
    switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::sigmoid: {
        Eigen::ArrayXd s = 1.0 / (1.0 + (-z.array()).exp());
        return (s * (1.0 - s)).matrix();
    }
    }
    return Eigen::VectorXd::Ones(z.size());
}

Eigen::MatrixXd activate_prime_batch(const Eigen::MatrixXd& z, Activation a) {
    switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::sigmoid: {
        Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
        return (s * (1.0 - s)).matrix();
    }
    }
    return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

Eigen::MatrixXd activate_batch(const Eigen::MatrixXd& z, Activation a) {
    switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    return z;
}

} // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

MlpModel::MlpModel(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes,
                   Activation activation)
    : activation_(activation) {
    if (inputs == 0 || classes == 0) throw ValidationError("model needs at least one input and one class");
    std::size_t prev = inputs;
    auto add = [&](std::size_t out) {
        if (out == 0) throw ValidationError("hidden layer of width 0");
        weights_.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(prev)));
        biases_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out)));
        prev = out;
    };
    for (auto h : hidden) add(h);
    add(classes);
}

void MlpModel::check_input(const Eigen::VectorXd& x) const {
    if (weights_.empty()) throw ValidationError("model has no layers");
    if (static_cast<std::size_t>(x.size()) != input_size())
        throw ValidationError("input width " + std::to_string(x.size()) + " does not match model input " +
                              std::to_string(input_size()));
}

Eigen::VectorXd MlpModel::logits(const Eigen::VectorXd& x) const {
    check_input(x);
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::VectorXd z = weights_[l] * h + biases_[l];
        h = l + 1 < weights_.size() ? activate(z, activation_) : z;
    }
    return h;
}

Eigen::VectorXd MlpModel::predict(const Eigen::VectorXd& x) const { return softmax(logits(x)); }

std::size_t MlpModel::classify(const Eigen::VectorXd& x) const {
    Eigen::Index best = 0;
    logits(x).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

std::vector<Eigen::VectorXd> MlpModel::hidden_preactivations(const Eigen::VectorXd& x) const {
    check_input(x);
    std::vector<Eigen::VectorXd> out;
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
        Eigen::VectorXd z = weights_[l] * h + biases_[l];
        out.push_back(z);
        h = activate(z, activation_);
    }
    return out;
}

Eigen::VectorXd MlpModel::input_gradient(const Eigen::VectorXd& x, std::size_t label) const {
    check_input(x);
    if (label >= class_count()) throw ValidationError("label out of range");
    std::vector<Eigen::VectorXd> pre;
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::VectorXd z = weights_[l] * h + biases_[l];
        pre.push_back(z);
        h = l + 1 < weights_.size() ? activate(z, activation_) : z;
    }
    Eigen::VectorXd delta = softmax(h);
    delta[static_cast<Eigen::Index>(label)] -= 1.0;
    for (std::size_t l = weights_.size(); l-- > 0;) {
        Eigen::VectorXd g = weights_[l].transpose() * delta;
        if (l == 0) return g;
        delta = g.cwiseProduct(activate_prime(pre[l - 1], activation_));
    }
    return delta;
}

Eigen::MatrixXd MlpModel::jacobian(const Eigen::VectorXd& x) const {
    check_input(x);
    Eigen::VectorXd h = x;
    Eigen::MatrixXd m;  // d(current layer output)/dx
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::VectorXd z = weights_[l] * h + biases_[l];
        m = l == 0 ? Eigen::MatrixXd(weights_[0]) : Eigen::MatrixXd(weights_[l] * m);
        if (l + 1 < weights_.size()) {
            m = activate_prime(z, activation_).asDiagonal() * m;
            h = activate(z, activation_);
        }
    }
    return m;
}

TrainResult train(const Eigen::MatrixXd& x, std::span<const std::size_t> labels, std::size_t classes,
                  const TrainConfig& config) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (n == 0 || labels.size() != n) throw ValidationError("train: need one label per sample");
    if (config.learning_rate <= 0.0 || config.epochs == 0 || config.batch_size == 0)
        throw ValidationError("train: learning rate, epochs and batch size must be positive");
    std::vector<std::size_t> per_class(classes, 0);
    for (auto y : labels) {
        if (y >= classes) throw ValidationError("train: label out of range");
        ++per_class[y];
    }
    if (std::any_of(per_class.begin(), per_class.end(), [](auto c) { return c == 0; }))
        throw ValidationError("train: every class needs at least one sample");

    TrainResult result;
    MlpModel& model = result.model;
    model = MlpModel(static_cast<std::size_t>(x.cols()), config.hidden, classes, config.activation);

    std::mt19937_64 rng(config.seed);
    const std::size_t layers = model.layer_count();
    for (std::size_t l = 0; l < layers; ++l) {
        auto& w = model.weights()[l];
        const double fan_in = static_cast<double>(w.cols());
        const double fan_out = static_cast<double>(w.rows());
        const double limit = config.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                                   : std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }

    std::vector<Eigen::MatrixXd> mw(layers), vw(layers);
    std::vector<Eigen::VectorXd> mb(layers), vb(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = vw[l] = Eigen::MatrixXd::Zero(model.weights()[l].rows(), model.weights()[l].cols());
        mb[l] = vb[l] = Eigen::VectorXd::Zero(model.biases()[l].size());
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const auto b = static_cast<Eigen::Index>(end - start);
            Eigen::MatrixXd batch(x.cols(), b);  // columns are samples
            for (Eigen::Index i = 0; i < b; ++i) batch.col(i) = x.row(static_cast<Eigen::Index>(order[start + i])).transpose();

            std::vector<Eigen::MatrixXd> acts{batch};
            std::vector<Eigen::MatrixXd> pre;
            for (std::size_t l = 0; l < layers; ++l) {
                Eigen::MatrixXd z = (model.weights()[l] * acts.back()).colwise() + model.biases()[l];
                pre.push_back(z);
                acts.push_back(l + 1 < layers ? activate_batch(z, config.activation) : z);
            }
            Eigen::MatrixXd delta = acts.back();
            for (Eigen::Index i = 0; i < b; ++i) {
                Eigen::VectorXd p = softmax(delta.col(i));
                const auto y = static_cast<Eigen::Index>(labels[order[start + i]]);
                epoch_loss -= std::log(std::max(p[y], 1e-300));
                p[y] -= 1.0;
                delta.col(i) = p;
            }
            delta /= static_cast<double>(b);

            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t l = layers; l-- > 0;) {
                Eigen::MatrixXd gw = delta * acts[l].transpose();
                Eigen::VectorXd gb = delta.rowwise().sum();
                if (l > 0)
                    delta = (model.weights()[l].transpose() * delta).cwiseProduct(activate_prime_batch(pre[l - 1], config.activation));
                mw[l] = beta1 * mw[l] + (1.0 - beta1) * gw;
                vw[l] = beta2 * vw[l] + (1.0 - beta2) * gw.cwiseProduct(gw);
                mb[l] = beta1 * mb[l] + (1.0 - beta1) * gb;
                vb[l] = beta2 * vb[l] + (1.0 - beta2) * gb.cwiseProduct(gb);
                model.weights()[l].array() -=
                    config.learning_rate * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + eps);
                model.biases()[l].array() -=
                    config.learning_rate * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
            }
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw TrainingError("training loss became NaN/inf at epoch " + std::to_string(epoch + 1) +
                                "; the learning rate is likely too high");
        result.epoch_loss.push_back(epoch_loss);
    }
    result.train_accuracy = accuracy(model, x, labels);
    return result;
}

double accuracy(const MlpModel& model, const Eigen::MatrixXd& x, std::span<const std::size_t> labels) {
    if (labels.empty()) return 0.0;
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        if (model.classify(x.row(r).transpose()) == labels[static_cast<std::size_t>(r)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

constexpr char kModelMagic[7] = {'C', 'A', 'D', 'V', 'M', 'L', 'P'};
constexpr std::uint8_t kModelVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("model file truncated");
    return v;
}

} // namespace

void save_model(const MlpModel& model, std::ostream& out) {
    out.write(kModelMagic, sizeof kModelMagic);
    put<std::uint8_t>(out, kModelVersion);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(model.activation()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.layer_count()));
    for (const auto& w : model.weights()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(w.rows()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(w.cols()));
    }
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const auto& w = model.weights()[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) put<double>(out, w(r, c));
        for (Eigen::Index r = 0; r < model.biases()[l].size(); ++r) put<double>(out, model.biases()[l][r]);
    }
    if (!out) throw ValidationError("failed writing model");
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write model file " + path.string());
    save_model(model, out);
}

MlpModel load_model(std::istream& in) {
    char magic[sizeof kModelMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
        throw ParseError("not a model file (bad magic)");
    if (get<std::uint8_t>(in) != kModelVersion) throw ParseError("unsupported model format version");
    const auto act = get<std::uint8_t>(in);
    if (act > 2) throw ParseError("unknown activation in model file");
    const auto layers = get<std::uint32_t>(in);
    if (layers == 0) throw ParseError("model file has no layers");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(layers);
    for (auto& s : shapes) {
        s.first = get<std::uint32_t>(in);
        s.second = get<std::uint32_t>(in);
    }
    for (std::size_t l = 1; l < layers; ++l)
        if (shapes[l].second != shapes[l - 1].first) throw ParseError("model file has incompatible layer shapes");
    std::vector<std::size_t> hidden;
    for (std::size_t l = 0; l + 1 < layers; ++l) hidden.push_back(shapes[l].first);
    MlpModel model(shapes[0].second, hidden, shapes.back().first, static_cast<Activation>(act));
    for (std::size_t l = 0; l < layers; ++l) {
        auto& w = model.weights()[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = get<double>(in);
        for (Eigen::Index r = 0; r < model.biases()[l].size(); ++r) model.biases()[l][r] = get<double>(in);
    }
    return model;
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model file " + path.string());
    return load_model(in);
}

} // namespace cadv
