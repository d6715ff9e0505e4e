#include <doctest.h>

#include <gwrcil/errors.hpp>
#include <gwrcil/nn.hpp>

#include <cmath>
#include <limits>
#include <vector>

using namespace gwrcil;
using namespace gwrcil::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
}

Matrix one_hot_rows(const std::vector<int>& labels, int n) {
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), n);
    for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return t;
}

}  // namespace

TEST_CASE("forward matches a hand-rolled two-layer pass") {
    Rng rng(3);
    const std::vector<int> dims{4, 5, 3};
    const auto net = Mlp::uniform(dims, rng);
    const Matrix x = random_matrix(6, 4, rng);
    const Matrix y = net.forward(x);
    REQUIRE(y.rows() == 6);
    REQUIRE(y.cols() == 3);
    const auto& l0 = net.layers()[0];
    const auto& l1 = net.layers()[1];
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::VectorXd h = l0.weights * x.row(r).transpose() + l0.bias;
        for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = std::max(0.0, h(i));
        const Eigen::VectorXd o = l1.weights * h + l1.bias;
        for (Eigen::Index i = 0; i < o.size(); ++i) CHECK(y(r, i) == doctest::Approx(o(i)).epsilon(1e-12));
    }
    CHECK(net.parameter_count() == static_cast<std::size_t>(4 * 5 + 5 + 5 * 3 + 3));
}

TEST_CASE("uniform init respects the fan-in bound") {
    Rng rng(1);
    const std::vector<int> dims{16, 32};
    const auto net = Mlp::uniform(dims, rng);
    const double bound = 1.0 / std::sqrt(16.0);
    CHECK(net.layers()[0].weights.cwiseAbs().maxCoeff() <= bound);
    CHECK(net.layers()[0].bias.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("mismatched layers are rejected") {
    std::vector<LinearLayer> layers{LinearLayer::zeros(3, 4), LinearLayer::zeros(5, 2)};
    CHECK_THROWS_AS(Mlp{layers}, DimensionError);
}

TEST_CASE("softmax cross-entropy value and gradient") {
    Eigen::VectorXd z(3);
    z << 1.0, 2.0, 3.0;
    const auto ce = softmax_cross_entropy(z, SoftLabel::one_hot(2, 3));
    const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(ce.loss == doctest::Approx(-std::log(std::exp(3.0) / denom)));
    CHECK(ce.grad(0) == doctest::Approx(std::exp(1.0) / denom));
    CHECK(ce.grad(2) == doctest::Approx(std::exp(3.0) / denom - 1.0));
    CHECK(ce.grad.sum() == doctest::Approx(0.0).epsilon(1e-12));

    Eigen::VectorXd big(2);
    big << 1000.0, 0.0;
    CHECK(std::isfinite(softmax_cross_entropy(big, SoftLabel::one_hot(1, 2)).loss));
    big(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax_cross_entropy(big, SoftLabel::one_hot(1, 2)), NumericError);
}

TEST_CASE("batch cross-entropy averages rows") {
    Matrix logits(2, 2);
    logits << 2.0, 0.0, 0.0, 2.0;
    const auto bce = batch_cross_entropy(logits, one_hot_rows({0, 0}, 2));
    const double good = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    const double bad = -std::log(1.0 / (std::exp(2.0) + 1.0));
    CHECK(bce.loss == doctest::Approx((good + bad) / 2.0));
    CHECK(bce.correct == 1);
}

TEST_CASE("step learning-rate schedule") {
    SgdConfig cfg;
    CHECK(learning_rate(cfg, 0) == doctest::Approx(0.1));
    CHECK(learning_rate(cfg, 59) == doctest::Approx(0.1));
    CHECK(learning_rate(cfg, 60) == doctest::Approx(0.01));
    CHECK(learning_rate(cfg, 80) == doctest::Approx(0.001));
    CHECK(learning_rate(cfg, 99) == doctest::Approx(0.001));
    SgdConfig bad;
    bad.milestones = {-1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sgd step follows momentum with decoupled decay") {
    std::vector<LinearLayer> layers{LinearLayer::zeros(1, 1)};
    layers[0].weights(0, 0) = 2.0;
    layers[0].bias(0) = -1.0;
    Mlp net(layers);
    SgdConfig cfg;
    cfg.lr0 = 0.5;
    cfg.momentum = 0.5;
    cfg.weight_decay = 0.1;
    Sgd opt(cfg);
    MlpGrads g = net.zero_grads();
    g[0].weights(0, 0) = 1.0;
    g[0].bias(0) = 0.0;

    double w = 2.0, buf = 0.0;
    for (int i = 0; i < 3; ++i) {
        opt.step(net, g, 0);
        buf = 0.5 * buf + 1.0;
        w -= 0.5 * (buf + 0.1 * w);
        CHECK(net.layers()[0].weights(0, 0) == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("backprop agrees with finite differences") {
    Rng rng(11);
    const std::vector<int> dims{6, 12, 12, 4};
    const auto net = Mlp::uniform(dims, rng);
    const Matrix x = random_matrix(5, 6, rng);
    const Matrix t = one_hot_rows({0, 1, 2, 3, 1}, 4);
    const auto report = grad_check(net, x, t, 1e-5);
    CHECK(report.errors.size() + report.skipped_kinks == net.parameter_count());
    CHECK(report.errors.size() > net.parameter_count() / 2);
    CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("a doubled gradient is caught") {
    Rng rng(12);
    const std::vector<int> dims{5, 8, 3};
    const auto net = Mlp::uniform(dims, rng);
    const Matrix x = random_matrix(4, 5, rng);
    const Matrix t = one_hot_rows({0, 1, 2, 0}, 3);
    auto lg = loss_and_grads(net, x, t);
    for (auto& l : lg.grads) {
        l.weights *= 2.0;
        l.bias *= 2.0;
    }
    const auto report = grad_check_against(net, x, t, lg.grads, 1e-5);
    CHECK(report.max_relative_error == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("relative error uses a floor on the numeric magnitude") {
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(1.0));
    CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-3));
}
