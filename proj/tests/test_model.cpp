#include "cadv/error.hpp"
#include "cadv/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace cadv;

namespace {

double cross_entropy(const MlpModel& m, const Eigen::VectorXd& x, std::size_t label) {
    return -std::log(softmax(m.logits(x))(static_cast<Eigen::Index>(label)));
}

MlpModel random_model(std::mt19937_64& rng, Activation act) {
    std::uniform_int_distribution<std::size_t> width(2, 8);
    const std::size_t inputs = width(rng);
    std::vector<std::size_t> hidden(1 + rng() % 2);
    for (auto& h : hidden) h = width(rng);
    const std::size_t classes = 2 + rng() % 3;
    MlpModel m(inputs, hidden, classes, act);
    std::normal_distribution<double> n(0.0, 0.7);
    for (auto& w : m.weights()) w = w.unaryExpr([&](double) { return n(rng); });
    for (auto& b : m.biases()) b = b.unaryExpr([&](double) { return n(rng); });
    return m;
}

bool near_kink(const MlpModel& m, const Eigen::VectorXd& x) {
    if (m.activation() != Activation::relu) return false;
    for (const auto& z : m.hidden_preactivations(x))
        if ((z.array().abs() < 1e-3).any()) return true;
    return false;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

} // namespace

TEST_CASE("softmax is stable and normalized") {
    Eigen::VectorXd z(3);
    z << 1000.0, 1001.0, 999.0;
    const auto p = softmax(z);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(std::isfinite(p(0)));
    CHECK(p(1) > p(0));
}

TEST_CASE("input gradient and jacobian match central differences") {
    std::mt19937_64 rng(17);
    const double h = 1e-5;
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const auto act = static_cast<Activation>(trial % 3);
        const auto m = random_model(rng, act);
        Eigen::VectorXd x(static_cast<Eigen::Index>(m.input_size()));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& v : x) v = u(rng);
        if (near_kink(m, x)) continue;
        ++checked;
        const std::size_t label = rng() % m.class_count();
        const auto g = m.input_gradient(x, label);
        const auto J = m.jacobian(x);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double fd = (cross_entropy(m, xp, label) - cross_entropy(m, xm, label)) / (2 * h);
            CHECK(rel_err(g(i), fd) <= 1e-4);
            const Eigen::VectorXd dl = (m.logits(xp) - m.logits(xm)) / (2 * h);
            for (Eigen::Index c = 0; c < J.rows(); ++c) CHECK(rel_err(J(c, i), dl(c)) <= 1e-4);
        }
    }
    CHECK(checked >= 40);
}

TEST_CASE("gradient is the jacobian transposed times (p - onehot)") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = random_model(rng, static_cast<Activation>(trial % 3));
        Eigen::VectorXd x = Eigen::VectorXd::Random(static_cast<Eigen::Index>(m.input_size()));
        const std::size_t y = trial % m.class_count();
        Eigen::VectorXd delta = m.predict(x);
        delta(static_cast<Eigen::Index>(y)) -= 1.0;
        const Eigen::VectorXd expected = m.jacobian(x).transpose() * delta;
        CHECK((m.input_gradient(x, y) - expected).norm() <= 1e-10 * std::max(1.0, expected.norm()));
    }
}

TEST_CASE("training learns a separable problem deterministically") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd x(400, 2);
    std::vector<std::size_t> y(400);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 400; ++i) {
        x(i, 0) = u(rng);
        x(i, 1) = u(rng);
        y[i] = x(i, 0) + x(i, 1) > 1.0 ? 1 : 0;
    }
    TrainConfig cfg;
    cfg.hidden = {16};
    cfg.learning_rate = 1e-2;
    cfg.epochs = 60;
    cfg.batch_size = 32;
    cfg.seed = 4;
    const auto a = train(x, y, 2, cfg);
    const auto b = train(x, y, 2, cfg);
    CHECK(a.train_accuracy >= 0.95);
    CHECK(a.epoch_loss.size() == 60);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(accuracy(a.model, x, y) == a.train_accuracy);
}

TEST_CASE("diverging training raises") {
    Eigen::MatrixXd x(4, 1);
    x << NAN, 0.5, 0.25, 0.75;
    std::vector<std::size_t> y{0, 1, 0, 1};
    TrainConfig cfg;
    cfg.hidden = {4};
    cfg.epochs = 3;
    CHECK_THROWS_AS(train(x, y, 2, cfg), TrainingError);
}

TEST_CASE("training validates its inputs") {
    Eigen::MatrixXd x(3, 2);
    x.setZero();
    std::vector<std::size_t> y{0, 1};
    CHECK_THROWS_AS(train(x, y, 2, TrainConfig{}), ValidationError);
    std::vector<std::size_t> bad{0, 1, 5};
    CHECK_THROWS_AS(train(x, bad, 2, TrainConfig{}), ValidationError);
}

TEST_CASE("model save and load round trip") {
    std::mt19937_64 rng(9);
    const auto m = random_model(rng, Activation::tanh);
    std::stringstream buf;
    save_model(m, buf);
    const auto back = load_model(buf);
    REQUIRE(back.layer_count() == m.layer_count());
    CHECK(back.activation() == Activation::tanh);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        CHECK(back.weights()[l] == m.weights()[l]);
        CHECK(back.biases()[l] == m.biases()[l]);
    }
    std::string bytes;
    {
        std::stringstream b;
        save_model(m, b);
        bytes = b.str();
    }
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_model(cut), ParseError);
}

TEST_CASE("input width is checked") {
    MlpModel m(3, {4}, 2, Activation::relu);
    CHECK_THROWS_AS(m.logits(Eigen::VectorXd::Zero(2)), ValidationError);
}
