#include "gwrcil/gwr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gwrcil::gwr {

void Params::validate() const {
    if (!(activity_threshold > 0.0 && activity_threshold <= 1.0))
        throw ConfigError("gwr: activity threshold must lie in (0, 1]");
    if (!(firing_threshold > 0.0 && firing_threshold <= h0))
        throw ConfigError("gwr: firing threshold must lie in (0, h0]");
    if (!(eps_n > 0.0 && eps_n <= eps_b && eps_b < 1.0))
        throw ConfigError("gwr: learning rates must satisfy 0 < eps_n <= eps_b < 1");
    if (age_max < 1) throw ConfigError("gwr: age_max must be at least 1");
    if (k < 1) throw ConfigError("gwr: k must be at least 1");
    if (!(alpha_b > 0.0 && alpha_n > 0.0 && tau_b > 0.0 && tau_n > 0.0))
        throw ConfigError("gwr: firing curve constants must be positive");
    if (max_nodes && *max_nodes < 2) throw ConfigError("gwr: max_nodes must be at least 2");
}

double firing_value(FiringRole role, std::int64_t count, const Params& p) {
    const double alpha = role == FiringRole::Bmu ? p.alpha_b : p.alpha_n;
    const double tau = role == FiringRole::Bmu ? p.tau_b : p.tau_n;
    return p.h0 - (1.0 / alpha) * (1.0 - std::exp(-alpha * static_cast<double>(count) / tau));
}

EdgeKey make_edge_key(NodeId a, NodeId b) {
    return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
}

Network Network::init(const LabeledFeature& a, const LabeledFeature& b, const Params& params) {
    params.validate();
    if (a.feature.size() != b.feature.size())
        throw DimensionError("gwr init: inputs have different dimensions");
    if (a.feature.size() == 0) throw DimensionError("gwr init: empty feature");
    Network g;
    g.params_ = params;
    g.dim_ = a.feature.size();
    g.add_node(a.feature, a.label);
    g.add_node(b.feature, b.label);
    return g;
}

NodeId Network::add_node(FeatureVector weight, ClassId label) {
    Node n;
    n.id = next_id_++;
    n.weight = std::move(weight);
    n.label = label;
    n.firing = params_.h0;
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

const Node* Network::find_node(NodeId id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const Node& n, NodeId v) { return n.id < v; });
    return (it != nodes_.end() && it->id == id) ? &*it : nullptr;
}

Node& Network::node_ref(NodeId id) {
    auto* n = const_cast<Node*>(find_node(id));
    if (!n) throw StateError("gwr: unknown node id " + std::to_string(id));
    return *n;
}

Node& Network::mutable_node(NodeId id) {
    return node_ref(id);
}

void Network::set_edge(NodeId a, NodeId b, int age) {
    if (a == b) throw StateError("gwr: self edge");
    node_ref(a);
    node_ref(b);
    edges_[make_edge_key(a, b)] = age;
}

std::vector<NodeId> Network::neighbors(NodeId id) const {
    std::vector<NodeId> out;
    for (const auto& [key, age] : edges_) {
        if (key.first == id) out.push_back(key.second);
        else if (key.second == id) out.push_back(key.first);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ClassId> Network::labels() const {
    std::vector<ClassId> out;
    for (const auto& n : nodes_) out.push_back(n.label);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

BmuPair Network::find_bmu2(const FeatureVector& x) const {
    if (nodes_.size() < 2) throw StateError("gwr: need at least two nodes to find best matches");
    if (x.size() != dim_) throw DimensionError("gwr: input dimension does not match network");
    BmuPair out;
    bool have_best = false, have_second = false;
    // Nodes are visited in ascending id, so strict comparisons keep the lowest id on ties.
    for (const auto& n : nodes_) {
        const double d = (x - n.weight).norm();
        if (!have_best || d < out.best_distance) {
            if (have_best) {
                out.second = out.best;
                out.second_distance = out.best_distance;
                have_second = true;
            }
            out.best = n.id;
            out.best_distance = d;
            have_best = true;
        } else if (!have_second || d < out.second_distance) {
            out.second = n.id;
            out.second_distance = d;
            have_second = true;
        }
    }
    return out;
}

void Network::refresh_firing(Node& n) const {
    n.firing = std::min(firing_value(FiringRole::Bmu, n.fire_count_bmu, params_),
                        firing_value(FiringRole::Neighbor, n.fire_count_nbr, params_));
}

StepTrace Network::train_step(const LabeledFeature& x) {
    if (x.feature.size() != dim_) throw DimensionError("gwr: input dimension does not match network");
    if (!is_unit_norm(x.feature)) throw ContractError("gwr: training input is not unit norm");

    const BmuPair bmu = find_bmu2(x.feature);
    const NodeId s = bmu.best;
    const NodeId t = bmu.second;
    edges_[make_edge_key(s, t)] = 0;

    StepTrace trace;
    trace.best = s;
    trace.second = t;
    trace.activity = std::exp(-bmu.best_distance);
    trace.best_firing = node_ref(s).firing;

    const bool wants_growth = trace.activity < params_.activity_threshold &&
                              trace.best_firing < params_.firing_threshold;
    const bool capped = params_.max_nodes && nodes_.size() >= *params_.max_nodes;

    if (wants_growth && !capped) {
        FeatureVector w = (node_ref(s).weight + x.feature) / 2.0;
        const NodeId r = add_node(std::move(w), x.label);
        edges_[make_edge_key(r, s)] = 0;
        edges_[make_edge_key(r, t)] = 0;
        edges_.erase(make_edge_key(s, t));
        trace.grew = true;
        trace.new_node = r;
    } else {
        trace.growth_capped = wants_growth && capped;
        const std::vector<NodeId> nbrs = neighbors(s);
        Node& ns = node_ref(s);
        ns.weight += params_.eps_b * ns.firing * (x.feature - ns.weight);
        for (NodeId j : nbrs) {
            Node& nj = node_ref(j);
            nj.weight += params_.eps_n * nj.firing * (x.feature - nj.weight);
        }
        for (auto& [key, age] : edges_) {
            if (key.first == s || key.second == s) ++age;
        }
        // The (s, t) edge is reset after the aging sweep so it stays at zero.
        edges_[make_edge_key(s, t)] = 0;
        ++ns.fire_count_bmu;
        refresh_firing(ns);
        for (NodeId j : nbrs) {
            Node& nj = node_ref(j);
            ++nj.fire_count_nbr;
            refresh_firing(nj);
        }
    }

    trace.edges_pruned = prune_edges();
    trace.nodes_pruned = prune_isolated_nodes();
    return trace;
}

std::size_t Network::prune_edges() {
    return std::erase_if(edges_, [&](const auto& e) { return e.second > params_.age_max; });
}

std::size_t Network::prune_isolated_nodes() {
    std::vector<NodeId> connected;
    connected.reserve(edges_.size() * 2);
    for (const auto& [key, age] : edges_) {
        connected.push_back(key.first);
        connected.push_back(key.second);
    }
    std::sort(connected.begin(), connected.end());
    std::size_t removed = 0;
    // Never shrink below two nodes; the best-match search needs a pair.
    for (auto it = nodes_.begin(); it != nodes_.end() && nodes_.size() > 2;) {
        if (!std::binary_search(connected.begin(), connected.end(), it->id)) {
            it = nodes_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

void Network::fit(std::span<const LabeledFeature> data, int epochs, RngSeed seed) {
    if (data.empty()) throw InputError("gwr fit: empty training data");
    if (epochs < 0) throw InputError("gwr fit: negative epoch count");
    std::vector<std::size_t> order(data.size());
    for (int e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) train_step(data[i]);
    }
}

ClassId Network::predict(const FeatureVector& x, int k) const {
    if (nodes_.empty()) throw StateError("gwr: predict on an empty network");
    if (k < 1) throw InputError("gwr: k must be at least 1");
    if (x.size() != dim_) throw DimensionError("gwr: query dimension does not match network");

    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) dist.emplace_back((x - nodes_[i].weight).norm(), i);
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    // Index order equals id order, so pair comparison breaks distance ties by lowest id.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());

    std::vector<std::pair<ClassId, int>> votes;  // in order of first (nearest) appearance
    for (std::size_t i = 0; i < kk; ++i) {
        const ClassId c = nodes_[dist[i].second].label;
        auto it = std::find_if(votes.begin(), votes.end(), [c](const auto& v) { return v.first == c; });
        if (it == votes.end()) votes.emplace_back(c, 1);
        else ++it->second;
    }
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

namespace {

constexpr const char* kSnapshotMagic = "gwrcil-gwr-snapshot";
constexpr int kSnapshotVersion = 1;

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_real(const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size())
        throw FormatError("gwr snapshot: bad real '" + tok + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& tok) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(tok, &pos);
        if (pos != tok.size()) throw FormatError("");
        return static_cast<Int>(v);
    } catch (const std::exception&) {
        throw FormatError("gwr snapshot: bad integer '" + tok + "'");
    }
}

std::vector<std::string> tokens_of(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(std::string("gwr snapshot: missing ") + what);
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string tok; ss >> tok;) out.push_back(tok);
    if (out.empty() || out[0] != what) throw FormatError(std::string("gwr snapshot: expected ") + what);
    return out;
}

}  // namespace

void Network::save(std::ostream& out) const {
    const Params& p = params_;
    out << kSnapshotMagic << ' ' << kSnapshotVersion << '\n';
    out << "header " << dim_ << ' ' << nodes_.size() << ' ' << edges_.size() << ' ' << next_id_ << '\n';
    out << "params " << hex(p.activity_threshold) << ' ' << hex(p.firing_threshold) << ' '
        << hex(p.eps_b) << ' ' << hex(p.eps_n) << ' ' << p.age_max << ' ' << hex(p.h0) << ' '
        << hex(p.alpha_b) << ' ' << hex(p.alpha_n) << ' ' << hex(p.tau_b) << ' ' << hex(p.tau_n)
        << ' ' << p.k << ' ' << (p.max_nodes ? static_cast<long long>(*p.max_nodes) : -1LL) << '\n';
    for (const auto& n : nodes_) {
        out << "node " << n.id << ' ' << n.label << ' ' << hex(n.firing) << ' ' << n.fire_count_bmu
            << ' ' << n.fire_count_nbr;
        for (Eigen::Index i = 0; i < n.weight.size(); ++i) out << ' ' << hex(n.weight[i]);
        out << '\n';
    }
    for (const auto& [key, age] : edges_) out << "edge " << key.first << ' ' << key.second << ' ' << age << '\n';
}

Network Network::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("gwr snapshot: empty input");
    {
        std::istringstream ss(line);
        std::string magic;
        int version = 0;
        if (!(ss >> magic >> version) || magic != kSnapshotMagic)
            throw FormatError("gwr snapshot: bad magic line");
        if (version != kSnapshotVersion)
            throw FormatError("gwr snapshot: unsupported version " + std::to_string(version));
    }
    Network g;
    const auto h = tokens_of(in, "header");
    if (h.size() != 5) throw FormatError("gwr snapshot: malformed header");
    g.dim_ = parse_int<Eigen::Index>(h[1]);
    const auto n_nodes = parse_int<std::size_t>(h[2]);
    const auto n_edges = parse_int<std::size_t>(h[3]);
    g.next_id_ = parse_int<NodeId>(h[4]);

    const auto p = tokens_of(in, "params");
    if (p.size() != 13) throw FormatError("gwr snapshot: malformed params");
    g.params_.activity_threshold = parse_real(p[1]);
    g.params_.firing_threshold = parse_real(p[2]);
    g.params_.eps_b = parse_real(p[3]);
    g.params_.eps_n = parse_real(p[4]);
    g.params_.age_max = parse_int<int>(p[5]);
    g.params_.h0 = parse_real(p[6]);
    g.params_.alpha_b = parse_real(p[7]);
    g.params_.alpha_n = parse_real(p[8]);
    g.params_.tau_b = parse_real(p[9]);
    g.params_.tau_n = parse_real(p[10]);
    g.params_.k = parse_int<int>(p[11]);
    const auto cap = parse_int<long long>(p[12]);
    if (cap >= 0) g.params_.max_nodes = static_cast<std::size_t>(cap);

    for (std::size_t i = 0; i < n_nodes; ++i) {
        const auto t = tokens_of(in, "node");
        if (t.size() != static_cast<std::size_t>(6 + g.dim_)) throw FormatError("gwr snapshot: malformed node");
        Node n;
        n.id = parse_int<NodeId>(t[1]);
        n.label = parse_int<ClassId>(t[2]);
        n.firing = parse_real(t[3]);
        n.fire_count_bmu = parse_int<std::int64_t>(t[4]);
        n.fire_count_nbr = parse_int<std::int64_t>(t[5]);
        n.weight.resize(g.dim_);
        for (Eigen::Index j = 0; j < g.dim_; ++j) n.weight[j] = parse_real(t[6 + j]);
        if (!g.nodes_.empty() && g.nodes_.back().id >= n.id)
            throw FormatError("gwr snapshot: node ids must be strictly increasing");
        g.nodes_.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < n_edges; ++i) {
        const auto t = tokens_of(in, "edge");
        if (t.size() != 4) throw FormatError("gwr snapshot: malformed edge");
        const auto a = parse_int<NodeId>(t[1]);
        const auto b = parse_int<NodeId>(t[2]);
        if (a == b || !g.find_node(a) || !g.find_node(b))
            throw FormatError("gwr snapshot: edge references unknown or identical nodes");
        g.edges_[make_edge_key(a, b)] = parse_int<int>(t[3]);
    }
    return g;
}

void Network::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    save(out);
    if (!out) throw IoError("failed writing " + path);
}

Network Network::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return load(in);
}

std::string check_invariants(const Network& g) {
    std::ostringstream err;
    const auto& p = g.params();
    const double lower = p.h0 - 1.0 / std::min(p.alpha_b, p.alpha_n);
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
        const auto& n = g.nodes()[i];
        if (i > 0 && g.nodes()[i - 1].id >= n.id) err << "node ids out of order; ";
        if (!n.weight.allFinite()) err << "node " << n.id << " has non-finite weight; ";
        if (!(n.firing >= lower && n.firing <= p.h0)) err << "node " << n.id << " firing out of range; ";
    }
    for (const auto& [key, age] : g.edges()) {
        if (key.first >= key.second) err << "edge key not ordered or self edge; ";
        if (!g.find_node(key.first) || !g.find_node(key.second)) err << "edge to missing node; ";
        if (age < 0 || age > p.age_max) err << "edge age " << age << " out of range; ";
    }
    if (g.node_count() > 2) {
        std::vector<NodeId> linked;
        linked.reserve(g.edges().size() * 2);
        for (const auto& [key, age] : g.edges()) {
            linked.push_back(key.first);
            linked.push_back(key.second);
        }
        std::sort(linked.begin(), linked.end());
        for (const auto& n : g.nodes())
            if (!std::binary_search(linked.begin(), linked.end(), n.id)) err << "node " << n.id << " isolated; ";
    }
    return err.str();
}

}  // namespace gwrcil::gwr
