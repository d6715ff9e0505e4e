#include "gwrcil/nn.hpp"

#include <algorithm>
#include <cmath>

namespace gwrcil::nn {

LinearLayer LinearLayer::zeros(Eigen::Index in, Eigen::Index out) {
    return {Matrix::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

LinearLayer LinearLayer::uniform(Eigen::Index in, Eigen::Index out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    LinearLayer layer = zeros(in, out);
    for (Eigen::Index c = 0; c < in; ++c)
        for (Eigen::Index r = 0; r < out; ++r) layer.weights(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < out; ++r) layer.bias[r] = dist(rng);
    return layer;
}

Mlp::Mlp(std::vector<LinearLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw DimensionError("an MLP needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.bias.size() != l.out_dim())
            throw DimensionError("layer " + std::to_string(i) + ": bias size does not match output");
        if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
            throw DimensionError("layer " + std::to_string(i) + ": input does not chain");
    }
}

Mlp Mlp::uniform(std::span<const int> dims, Rng& rng) {
    if (dims.size() < 2) throw DimensionError("an MLP needs at least input and output dims");
    std::vector<LinearLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        layers.push_back(LinearLayer::uniform(dims[i], dims[i + 1], rng));
    return Mlp(std::move(layers));
}

Mlp Mlp::zeros(std::span<const int> dims) {
    if (dims.size() < 2) throw DimensionError("an MLP needs at least input and output dims");
    std::vector<LinearLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        layers.push_back(LinearLayer::zeros(dims[i], dims[i + 1]));
    return Mlp(std::move(layers));
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

Matrix Mlp::forward(const Matrix& batch) const {
    Cache cache;
    return forward(batch, cache);
}

Matrix Mlp::forward(const Matrix& batch, Cache& cache) const {
    if (layers_.empty()) throw StateError("forward on an empty MLP");
    if (batch.cols() != in_dim()) {
        throw DimensionError("batch has " + std::to_string(batch.cols()) +
                             " columns, network expects " + std::to_string(in_dim()));
    }
    cache.inputs.clear();
    cache.pre.clear();
    Matrix a = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        Matrix z = a * l.weights.transpose();
        z.rowwise() += l.bias.transpose();
        cache.inputs.push_back(std::move(a));
        cache.pre.push_back(z);
        a = (i + 1 < layers_.size()) ? Matrix(z.cwiseMax(0.0)) : std::move(z);
    }
    return a;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& grad_out, MlpGrads& grads) const {
    if (grads.size() != layers_.size()) throw DimensionError("gradient buffer has wrong layer count");
    Matrix g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        if (k + 1 < layers_.size()) {
            g = g.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
        }
        grads[k].weights += g.transpose() * cache.inputs[k];
        grads[k].bias += g.colwise().sum().transpose();
        g = g * layers_[k].weights;
    }
    return g;
}

MlpGrads Mlp::zero_grads() const {
    MlpGrads grads;
    grads.reserve(layers_.size());
    for (const auto& l : layers_) grads.push_back(LinearLayer::zeros(l.in_dim(), l.out_dim()));
    return grads;
}

std::vector<double*> Mlp::parameter_pointers() {
    std::vector<double*> out;
    out.reserve(parameter_count());
    for (auto& l : layers_) {
        for (Eigen::Index i = 0; i < l.weights.size(); ++i) out.push_back(l.weights.data() + i);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
    }
    return out;
}

std::vector<double> flatten(const MlpGrads& grads) {
    std::vector<double> out;
    for (const auto& l : grads) {
        out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

void append_activation_pattern(const Mlp::Cache& cache, std::vector<char>& out) {
    // The output layer has no ReLU.
    for (std::size_t k = 0; k + 1 < cache.pre.size(); ++k) {
        const Matrix& z = cache.pre[k];
        for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(z.data()[i] > 0.0 ? 1 : 0);
    }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

CrossEntropy softmax_cross_entropy(const Eigen::VectorXd& logits, const SoftLabel& target) {
    if (logits.size() != target.weights.size()) {
        throw DimensionError("logits have " + std::to_string(logits.size()) +
                             " entries, target has " + std::to_string(target.weights.size()));
    }
    if (!logits.allFinite()) throw NumericError("non-finite logits");
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    CrossEntropy out;
    out.loss = lse * target.weights.sum() - target.weights.dot(logits);
    out.grad = softmax(logits) - target.weights;
    return out;
}

BatchCrossEntropy batch_cross_entropy(const Matrix& logits, const Matrix& targets) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
        throw DimensionError("logits and targets differ in shape");
    if (logits.rows() == 0) throw InputError("cross-entropy of an empty batch");
    BatchCrossEntropy out;
    out.grad.resize(logits.rows(), logits.cols());
    const double scale = 1.0 / static_cast<double>(logits.rows());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Eigen::VectorXd z = logits.row(r).transpose();
        const SoftLabel y{targets.row(r).transpose()};
        auto ce = softmax_cross_entropy(z, y);
        out.loss += ce.loss * scale;
        out.grad.row(r) = ce.grad.transpose() * scale;
        Eigen::Index zi = 0, yi = 0;
        z.maxCoeff(&zi);
        y.weights.maxCoeff(&yi);
        if (zi == yi) ++out.correct;
    }
    return out;
}

void SgdConfig::validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("sgd: lr0 must be positive");
    if (!(decay > 1.0)) throw ConfigError("sgd: decay must exceed 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be non-negative");
    if (epochs < 0) throw ConfigError("sgd: epochs must be non-negative");
    for (int m : milestones)
        if (m < 0) throw ConfigError("sgd: milestones must be non-negative");
}

double learning_rate(const SgdConfig& cfg, int epoch) {
    const auto passed = std::count_if(cfg.milestones.begin(), cfg.milestones.end(),
                                      [epoch](int m) { return epoch >= m; });
    return cfg.lr0 / std::pow(cfg.decay, static_cast<double>(passed));
}

void Sgd::step(Mlp& net, const MlpGrads& grads, int epoch) {
    auto& layers = net.layers();
    if (grads.size() != layers.size()) throw DimensionError("sgd: gradient layer count mismatch");
    if (buffers_.empty()) buffers_ = net.zero_grads();
    const double lr = learning_rate(cfg_, epoch);
    for (std::size_t k = 0; k < layers.size(); ++k) {
        auto& l = layers[k];
        auto& b = buffers_[k];
        const auto& g = grads[k];
        if (g.weights.rows() != l.weights.rows() || g.weights.cols() != l.weights.cols() ||
            g.bias.size() != l.bias.size())
            throw DimensionError("sgd: gradient shape mismatch in layer " + std::to_string(k));
        b.weights = cfg_.momentum * b.weights + g.weights;
        b.bias = cfg_.momentum * b.bias + g.bias;
        l.weights -= lr * (b.weights + cfg_.weight_decay * l.weights);
        l.bias -= lr * (b.bias + cfg_.weight_decay * l.bias);
    }
}

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max(std::abs(numeric), floor);
}

GradReport check_gradients(std::span<double* const> params, std::span<const double> analytic,
                           const std::function<LossProbe()>& probe, double eps) {
    if (params.size() != analytic.size())
        throw DimensionError("gradient check: parameter and gradient counts differ");
    GradReport report;
    const std::vector<char> base = probe().pattern;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i];
        const double saved = *p;
        *p = saved + eps;
        const LossProbe plus = probe();
        *p = saved - eps;
        const LossProbe minus = probe();
        *p = saved;
        if (plus.pattern != base || minus.pattern != base) {
            ++report.skipped_kinks;
            continue;
        }
        ParameterError e;
        e.index = i;
        e.analytic = analytic[i];
        e.numeric = (plus.loss - minus.loss) / (2.0 * eps);
        e.relative_error = relative_error(e.analytic, e.numeric);
        report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
        report.errors.push_back(e);
    }
    return report;
}

LossAndGrads loss_and_grads(const Mlp& net, const Matrix& batch, const Matrix& targets) {
    Mlp::Cache cache;
    const Matrix logits = net.forward(batch, cache);
    auto ce = batch_cross_entropy(logits, targets);
    LossAndGrads out{ce.loss, net.zero_grads()};
    net.backward(cache, ce.grad, out.grads);
    return out;
}

GradReport grad_check(const Mlp& net, const Matrix& batch, const Matrix& targets, double eps) {
    const auto analytic = loss_and_grads(net, batch, targets).grads;
    return grad_check_against(net, batch, targets, analytic, eps);
}

GradReport grad_check_against(const Mlp& net, const Matrix& batch, const Matrix& targets,
                              const MlpGrads& analytic, double eps) {
    Mlp work = net;
    const auto params = work.parameter_pointers();
    const auto flat = flatten(analytic);
    auto probe = [&]() {
        Mlp::Cache cache;
        const Matrix logits = work.forward(batch, cache);
        LossProbe p;
        p.loss = batch_cross_entropy(logits, targets).loss;
        append_activation_pattern(cache, p.pattern);
        return p;
    };
    return check_gradients(params, flat, probe, eps);
}

}  // namespace gwrcil::nn
