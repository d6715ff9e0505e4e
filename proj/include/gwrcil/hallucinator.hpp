#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gwrcil/core.hpp"
#include "gwrcil/gwr.hpp"
#include "gwrcil/nn.hpp"

// Re-initialization of a GWR network after the feature extractor changed.
//
// A hallucinator combines a stale node v (previous frame) with a same-class
// exemplar feature x re-extracted in the current frame:
//
//     x' = P2(P1(v) + x)
//
// P1 and P2 are trained jointly with a linear classifier head on the union of
// exemplar features and hallucinated features; gradients reach P1 and P2
// only through the hallucinated half. The head sees x' / |x'|, the same unit
// scale as the exemplars and the GWR input. Node weights are constants. Once
// trained, the head is no longer needed: the hallucinated features plus the
// exemplars seed a fresh GWR network in the current frame.
namespace gwrcil::hallucination {

struct NodeRecord {
    gwr::NodeId id = 0;
    FeatureVector weight;
    ClassId label = 0;
};

std::vector<NodeRecord> node_records(const gwr::Network& g);

struct Hallucinator {
    nn::Mlp p1;                    // d -> 2d -> d
    nn::Mlp p2;                    // d -> 2d -> 2d -> d
    nn::Mlp head;                  // d -> |classes|, single linear layer
    std::vector<ClassId> classes;  // head output index -> class id

    /// Every layer uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    static Hallucinator random(int dim, std::vector<ClassId> classes, Rng& rng);
    /// Starts at x' = x: P2 is the exact identity (relu(z) - relu(-z) through
    /// its 2d-wide hidden layers) and P1's output layer is zero. The head and
    /// P1's hidden layer are uniform.
    static Hallucinator residual(int dim, std::vector<ClassId> classes, Rng& rng);

    int dim() const { return static_cast<int>(p1.in_dim()); }
    /// Rows of `nodes` and `exemplars` are paired one to one.
    Matrix generate(const Matrix& nodes, const Matrix& exemplars) const;
    FeatureVector generate(const FeatureVector& node, const FeatureVector& exemplar) const;
    /// Head output index of a class; -1 when the head does not know it.
    int class_index(ClassId c) const;
};

struct Pair {
    std::size_t node = 0;      // index into the node batch
    std::size_t exemplar = 0;  // index into the exemplar pool
    ClassId label = 0;
};

struct Pairing {
    std::vector<Pair> pairs;
    std::size_t skipped = 0;  // nodes whose class has no exemplar
};

/// min(m, n_nodes) distinct node indices, uniformly without replacement.
std::vector<std::size_t> sample_node_batch(std::size_t n_nodes, std::size_t m, Rng& rng);

/// Pairs each node with a uniformly drawn exemplar of the same class. Nodes
/// of classes absent from the pool are skipped; PairingError when every node
/// is skipped or the pool is empty.
Pairing pair_same_class(std::span<const NodeRecord> nodes, std::span<const LabeledFeature> pool, RngSeed seed);

struct AugmentedFeature {
    LabeledFeature sample;
    gwr::NodeId node = 0;
    std::size_t exemplar = 0;
};

std::vector<AugmentedFeature> hallucinate(const Hallucinator& h, std::span<const NodeRecord> nodes,
                                          std::span<const LabeledFeature> pool, const Pairing& pairing);

enum class HallucinatorInit { Residual, Uniform };

struct HallucinatorConfig {
    nn::SgdConfig sgd;
    HallucinatorInit init = HallucinatorInit::Residual;
    int batch_size = 32;
    std::size_t node_batch = 64;  // m
    int passes = 2;               // pairing passes over all nodes when re-initializing
    int gwr_epochs = 3;           // epochs of the fresh network over the augmented set

    void validate() const;
};

/// Inputs of one composite forward pass. Targets are rows over head classes.
struct CompositeBatch {
    Matrix nodes;            // A x d
    Matrix exemplars;        // A x d, paired with `nodes`
    Matrix aug_targets;      // A x C
    Matrix real_features;    // R x d
    Matrix real_targets;     // R x C
};

struct CompositeGrads {
    nn::MlpGrads p1, p2, head;
};

struct CompositeResult {
    double loss = 0.0;  // mean cross-entropy over A + R rows
    std::size_t correct = 0;
    std::vector<char> pattern;  // ReLU pattern of P1 and P2
};

/// Forward pass and, when `grads` is non-null, accumulated backprop.
CompositeResult composite_loss(const Hallucinator& h, const CompositeBatch& batch, CompositeGrads* grads);

/// Central finite differences over every parameter of P1, P2 and the head.
nn::GradReport composite_grad_check(const Hallucinator& h, const CompositeBatch& batch, double eps);

struct EpochStats {
    std::size_t exemplar_count = 0;
    std::size_t augmented_count = 0;
    std::size_t train_size = 0;
    std::size_t skipped = 0;
    double loss = 0.0;       // mean minibatch loss
    double accuracy = 0.0;   // head accuracy over the epoch's training set
};

struct TrainedHallucinator {
    Hallucinator hallucinator;
    std::vector<EpochStats> epochs;
};

TrainedHallucinator train_hallucinator(std::span<const NodeRecord> v_prev, std::span<const LabeledFeature> x_r,
                                       const HallucinatorConfig& cfg, RngSeed seed);

struct Reinitialized {
    gwr::Network network;
    std::vector<LabeledFeature> training_set;  // exemplars then hallucinated features
    std::size_t augmented = 0;
    std::size_t skipped = 0;        // node pairings skipped for a missing class
    std::size_t degenerate = 0;     // hallucinated zero vectors dropped before normalization
};

/// Builds exemplars plus `passes` hallucinated features per pairable node
/// (normalized) and trains a fresh network on them.
Reinitialized reinitialize_gwr(const Hallucinator& h, std::span<const NodeRecord> v_prev,
                               std::span<const LabeledFeature> x_r, const gwr::Params& params,
                               const HallucinatorConfig& cfg, RngSeed seed);

}  // namespace gwrcil::hallucination
