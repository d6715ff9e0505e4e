#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gwrcil/core.hpp"

// Minimal dense MLP engine: row-major batches (one sample per row), ReLU
// between layers and identity at the output, softmax cross-entropy, and SGD
// with momentum, decoupled weight decay and step milestones.
namespace gwrcil::nn {

struct LinearLayer {
    Matrix weights;          // out x in
    Eigen::VectorXd bias;    // out

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }

    static LinearLayer zeros(Eigen::Index in, Eigen::Index out);
    /// Uniform in [-1/sqrt(in), 1/sqrt(in)] for weights and bias.
    static LinearLayer uniform(Eigen::Index in, Eigen::Index out, Rng& rng);
};

/// Gradients share the layout of the network they belong to.
using MlpGrads = std::vector<LinearLayer>;

class Mlp {
public:
    /// Intermediate values kept by a forward pass for backprop.
    struct Cache {
        std::vector<Matrix> inputs;  // input to each layer
        std::vector<Matrix> pre;     // pre-activation of each layer
    };

    Mlp() = default;
    explicit Mlp(std::vector<LinearLayer> layers);

    /// dims = {in, hidden..., out}; at least two entries.
    static Mlp uniform(std::span<const int> dims, Rng& rng);
    static Mlp zeros(std::span<const int> dims);

    Eigen::Index in_dim() const { return layers_.front().in_dim(); }
    Eigen::Index out_dim() const { return layers_.back().out_dim(); }
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t parameter_count() const;

    const std::vector<LinearLayer>& layers() const { return layers_; }
    std::vector<LinearLayer>& layers() { return layers_; }

    Matrix forward(const Matrix& batch) const;
    Matrix forward(const Matrix& batch, Cache& cache) const;

    /// Accumulates parameter gradients into `grads` (which must have this
    /// network's shapes) and returns the gradient with respect to the input.
    Matrix backward(const Cache& cache, const Matrix& grad_out, MlpGrads& grads) const;

    MlpGrads zero_grads() const;

    /// Pointers to every parameter, weights (column-major) then bias, layer by
    /// layer. The order matches flatten(MlpGrads).
    std::vector<double*> parameter_pointers();

private:
    std::vector<LinearLayer> layers_;
};

std::vector<double> flatten(const MlpGrads& grads);

/// ReLU on/off pattern of every hidden pre-activation; used to detect kink
/// crossings in finite-difference checks.
void append_activation_pattern(const Mlp::Cache& cache, std::vector<char>& out);

struct CrossEntropy {
    double loss = 0.0;
    Eigen::VectorXd grad;  // softmax(logits) - target
};

/// Throws DimensionError on size mismatch and NumericError on non-finite logits.
CrossEntropy softmax_cross_entropy(const Eigen::VectorXd& logits, const SoftLabel& target);

struct BatchCrossEntropy {
    double loss = 0.0;  // mean over rows
    Matrix grad;        // d(mean loss)/d(logits)
    std::size_t correct = 0;  // rows whose argmax matches the target argmax
};

BatchCrossEntropy batch_cross_entropy(const Matrix& logits, const Matrix& targets);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct SgdConfig {
    double lr0 = 0.1;
    std::vector<int> milestones{60, 80};
    double decay = 10.0;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    int epochs = 100;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

/// lr0 / decay^(number of milestones m with epoch >= m).
double learning_rate(const SgdConfig& cfg, int epoch);

/// Momentum SGD with weight decay applied outside the momentum buffer:
///   buf <- momentum * buf + g
///   w   <- w - lr * buf - lr * weight_decay * w
class Sgd {
public:
    explicit Sgd(SgdConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    void step(Mlp& net, const MlpGrads& grads, int epoch);
    const SgdConfig& config() const { return cfg_; }

private:
    SgdConfig cfg_;
    std::vector<LinearLayer> buffers_;
};

struct ParameterError {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradReport {
    double max_relative_error = 0.0;
    std::vector<ParameterError> errors;
    std::size_t skipped_kinks = 0;  // parameters whose probe crossed a ReLU kink
};

/// Loss value plus the activation pattern that produced it.
struct LossProbe {
    double loss = 0.0;
    std::vector<char> pattern;
};

/// Relative error |a - n| / max(|n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central finite differences over arbitrary parameters. `probe` re-evaluates
/// the loss with the current parameter values. Parameters whose +/-eps
/// probes change the activation pattern are skipped and counted.
GradReport check_gradients(std::span<double* const> params, std::span<const double> analytic,
                           const std::function<LossProbe()>& probe, double eps);

/// Mean softmax cross-entropy of `net` on a batch and its parameter gradients.
struct LossAndGrads {
    double loss = 0.0;
    MlpGrads grads;
};
LossAndGrads loss_and_grads(const Mlp& net, const Matrix& batch, const Matrix& targets);

GradReport grad_check(const Mlp& net, const Matrix& batch, const Matrix& targets, double eps);
/// Same as grad_check but compares against caller-supplied analytic gradients.
GradReport grad_check_against(const Mlp& net, const Matrix& batch, const Matrix& targets,
                              const MlpGrads& analytic, double eps);

}  // namespace gwrcil::nn
