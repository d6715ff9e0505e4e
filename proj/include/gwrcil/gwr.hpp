#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gwrcil/core.hpp"

// Grow-When-Required network: a growing graph of labelled prototypes. Nodes
// are inserted where the best-matching node is both far from the input
// (activity below a_T) and already habituated (firing below h_T); otherwise
// the winner and its neighbours are pulled toward the input.
namespace gwrcil::gwr {

using NodeId = std::uint64_t;

struct Params {
    double activity_threshold = 0.65;  // a_T
    double firing_threshold = 0.11;    // h_T
    double eps_b = 0.1;
    double eps_n = 0.01;
    int age_max = 50;
    double h0 = 1.0;
    double alpha_b = 1.05;
    double alpha_n = 1.05;
    double tau_b = 3.33;
    double tau_n = 14.3;
    int k = 3;                           // inference neighbours
    std::optional<std::size_t> max_nodes;  // growth cap; none by default

    void validate() const;
    bool operator==(const Params&) const = default;
};

enum class FiringRole { Bmu, Neighbor };

/// Habituation curve h(t) = h0 - (1/alpha)(1 - exp(-alpha t / tau)) for the
/// given role after `count` firings.
double firing_value(FiringRole role, std::int64_t count, const Params& params);

struct Node {
    NodeId id = 0;
    FeatureVector weight;
    ClassId label = 0;
    double firing = 1.0;
    std::int64_t fire_count_bmu = 0;
    std::int64_t fire_count_nbr = 0;

    bool operator==(const Node&) const = default;
};

/// Endpoints are stored ordered (first < second).
using EdgeKey = std::pair<NodeId, NodeId>;
EdgeKey make_edge_key(NodeId a, NodeId b);

struct BmuPair {
    NodeId best = 0;
    NodeId second = 0;
    double best_distance = 0.0;
    double second_distance = 0.0;
};

/// What happened during one training step; used by tests and diagnostics.
struct StepTrace {
    NodeId best = 0;
    NodeId second = 0;
    double activity = 0.0;
    double best_firing = 0.0;
    bool grew = false;
    bool growth_capped = false;  // growth conditions held but max_nodes blocked it
    std::optional<NodeId> new_node;
    std::size_t edges_pruned = 0;
    std::size_t nodes_pruned = 0;
};

class Network {
public:
    Network() = default;

    /// Two-node network built from a and b; no edges.
    static Network init(const LabeledFeature& a, const LabeledFeature& b, const Params& params);

    const Params& params() const { return params_; }
    Eigen::Index dim() const { return dim_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    /// Nodes in ascending id order.
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::map<EdgeKey, int>& edges() const { return edges_; }

    const Node* find_node(NodeId id) const;
    std::vector<NodeId> neighbors(NodeId id) const;
    std::vector<ClassId> labels() const;

    /// Two nearest nodes; ties by lowest id. StateError with fewer than two nodes.
    BmuPair find_bmu2(const FeatureVector& x) const;

    /// One pass of the growth/adaptation rule. `x.feature` must be unit norm
    /// (ContractError otherwise).
    StepTrace train_step(const LabeledFeature& x);

    /// Shuffles `data` with `seed` each epoch and trains on every sample.
    void fit(std::span<const LabeledFeature> data, int epochs, RngSeed seed);

    /// Majority label among the k nearest nodes; ties go to the label whose
    /// member is nearest. Uses every node when k exceeds the node count.
    ClassId predict(const FeatureVector& x, int k) const;
    ClassId predict(const FeatureVector& x) const { return predict(x, params_.k); }

    /// Versioned text snapshot with hex-float reals (bit-exact round trip).
    void save(std::ostream& out) const;
    static Network load(std::istream& in);
    void save_file(const std::string& path) const;
    static Network load_file(const std::string& path);

    bool operator==(const Network&) const = default;

    // Graph surgery used by tests that script specific situations.
    Node& mutable_node(NodeId id);
    void set_edge(NodeId a, NodeId b, int age);

private:
    NodeId add_node(FeatureVector weight, ClassId label);
    Node& node_ref(NodeId id);
    std::size_t prune_edges();
    std::size_t prune_isolated_nodes();
    void refresh_firing(Node& n) const;

    Params params_;
    Eigen::Index dim_ = 0;
    NodeId next_id_ = 0;
    std::vector<Node> nodes_;
    std::map<EdgeKey, int> edges_;
};

inline Network gwr_init(const LabeledFeature& a, const LabeledFeature& b, const Params& params) {
    return Network::init(a, b, params);
}

/// Graph hygiene check used by tests and the acceptance suite. Returns an
/// empty string when the network is sound, otherwise a description.
std::string check_invariants(const Network& g);

}  // namespace gwrcil::gwr
