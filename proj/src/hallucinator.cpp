#include "gwrcil/hallucinator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace gwrcil::hallucination {

std::vector<NodeRecord> node_records(const gwr::Network& g) {
    std::vector<NodeRecord> out;
    out.reserve(g.node_count());
    for (const auto& n : g.nodes()) out.push_back({n.id, n.weight, n.label});
    return out;
}

Hallucinator Hallucinator::random(int dim, std::vector<ClassId> classes, Rng& rng) {
    if (dim < 1) throw DimensionError("hallucinator: dimension must be positive");
    if (classes.empty()) throw InputError("hallucinator: head needs at least one class");
    Hallucinator h;
    const int p1_dims[] = {dim, 2 * dim, dim};
    const int p2_dims[] = {dim, 2 * dim, 2 * dim, dim};
    const int head_dims[] = {dim, static_cast<int>(classes.size())};
    h.p1 = nn::Mlp::uniform(p1_dims, rng);
    h.p2 = nn::Mlp::uniform(p2_dims, rng);
    h.head = nn::Mlp::uniform(head_dims, rng);
    h.classes = std::move(classes);
    return h;
}

Hallucinator Hallucinator::residual(int dim, std::vector<ClassId> classes, Rng& rng) {
    Hallucinator h = random(dim, std::move(classes), rng);
    auto& p1_out = h.p1.layers().back();
    p1_out.weights.setZero();
    p1_out.bias.setZero();

    const Matrix eye = Matrix::Identity(dim, dim);
    auto& l = h.p2.layers();
    l[0].weights << eye, -eye;
    l[1].weights.setIdentity();
    l[2].weights << eye, -eye;
    for (auto& layer : l) layer.bias.setZero();
    return h;
}

Matrix Hallucinator::generate(const Matrix& nodes, const Matrix& exemplars) const {
    if (nodes.rows() != exemplars.rows()) throw DimensionError("hallucinator: node and exemplar counts differ");
    if (exemplars.cols() != p1.out_dim())
        throw DimensionError("hallucinator: exemplar dimension does not match P1 output");
    return p2.forward(p1.forward(nodes) + exemplars);
}

FeatureVector Hallucinator::generate(const FeatureVector& node, const FeatureVector& exemplar) const {
    return generate(Matrix(node.transpose()), Matrix(exemplar.transpose())).row(0).transpose();
}

int Hallucinator::class_index(ClassId c) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), c);
    return (it != classes.end() && *it == c) ? static_cast<int>(it - classes.begin()) : -1;
}

std::vector<std::size_t> sample_node_batch(std::size_t n_nodes, std::size_t m, Rng& rng) {
    std::vector<std::size_t> idx(n_nodes);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(m, n_nodes));
    return idx;
}

Pairing pair_same_class(std::span<const NodeRecord> nodes, std::span<const LabeledFeature> pool, RngSeed seed) {
    if (pool.empty()) throw PairingError("pairing: exemplar pool is empty");
    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label].push_back(i);
    Rng rng(seed);
    Pairing out;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto it = by_class.find(nodes[k].label);
        if (it == by_class.end()) {
            ++out.skipped;
            continue;
        }
        std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
        out.pairs.push_back({k, it->second[pick(rng)], nodes[k].label});
    }
    if (out.pairs.empty()) throw PairingError("pairing: no node shares a class with the exemplar pool");
    return out;
}

std::vector<AugmentedFeature> hallucinate(const Hallucinator& h, std::span<const NodeRecord> nodes,
                                          std::span<const LabeledFeature> pool, const Pairing& pairing) {
    const Eigen::Index d = h.p1.in_dim();
    const auto n = static_cast<Eigen::Index>(pairing.pairs.size());
    Matrix v(n, d), x(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& p = pairing.pairs[static_cast<std::size_t>(r)];
        const auto& node = nodes[p.node].weight;
        const auto& ex = pool[p.exemplar].feature;
        if (node.size() != d || ex.size() != d) throw DimensionError("hallucinate: feature dimension mismatch");
        v.row(r) = node.transpose();
        x.row(r) = ex.transpose();
    }
    const Matrix out = h.generate(v, x);
    std::vector<AugmentedFeature> aug;
    aug.reserve(pairing.pairs.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& p = pairing.pairs[static_cast<std::size_t>(r)];
        aug.push_back({{out.row(r).transpose(), p.label}, nodes[p.node].id, p.exemplar});
    }
    return aug;
}

void HallucinatorConfig::validate() const {
    sgd.validate();
    if (batch_size < 1) throw ConfigError("hallucinator: batch size must be positive");
    if (node_batch < 1) throw ConfigError("hallucinator: node batch must be positive");
    if (passes < 1) throw ConfigError("hallucinator: passes must be positive");
    if (gwr_epochs < 1) throw ConfigError("hallucinator: gwr epochs must be positive");
}

CompositeResult composite_loss(const Hallucinator& h, const CompositeBatch& b, CompositeGrads* grads) {
    const Eigen::Index a = b.nodes.rows();
    const Eigen::Index r = b.real_features.rows();
    const Eigen::Index c = h.head.out_dim();
    if (b.exemplars.rows() != a || b.aug_targets.rows() != a || b.real_targets.rows() != r)
        throw DimensionError("composite batch: row counts disagree");
    if (a + r == 0) throw InputError("composite batch is empty");

    nn::Mlp::Cache c1, c2, ch;
    Matrix head_in(a + r, h.head.in_dim());
    Matrix raw;                 // P2 output, A x d
    Eigen::VectorXd norms;      // row norms of raw
    if (a > 0) {
        const Matrix mid = h.p1.forward(b.nodes, c1) + b.exemplars;
        raw = h.p2.forward(mid, c2);
        norms = raw.rowwise().norm();
        if ((norms.array() == 0.0).any()) throw NumericError("hallucinated feature collapsed to zero");
        head_in.topRows(a) = norms.cwiseInverse().asDiagonal() * raw;
    }
    if (r > 0) head_in.bottomRows(r) = b.real_features;
    Matrix targets(a + r, c);
    if (a > 0) targets.topRows(a) = b.aug_targets;
    if (r > 0) targets.bottomRows(r) = b.real_targets;

    const Matrix logits = h.head.forward(head_in, ch);
    const auto ce = nn::batch_cross_entropy(logits, targets);

    CompositeResult out;
    out.loss = ce.loss;
    out.correct = ce.correct;
    if (a > 0) {
        nn::append_activation_pattern(c1, out.pattern);
        nn::append_activation_pattern(c2, out.pattern);
    }
    if (grads) {
        const Matrix g_in = h.head.backward(ch, ce.grad, grads->head);
        if (a > 0) {
            // Through y = z / |z|: dz = (g - y (y . g)) / |z|.
            const Matrix y = head_in.topRows(a);
            const Matrix g_y = g_in.topRows(a);
            const Eigen::VectorXd dots = (y.cwiseProduct(g_y)).rowwise().sum();
            const Matrix g_raw = norms.cwiseInverse().asDiagonal() * (g_y - dots.asDiagonal() * y);
            const Matrix g_mid = h.p2.backward(c2, g_raw, grads->p2);
            h.p1.backward(c1, g_mid, grads->p1);
        }
    }
    return out;
}

namespace {

CompositeGrads zero_grads(const Hallucinator& h) {
    return {h.p1.zero_grads(), h.p2.zero_grads(), h.head.zero_grads()};
}

Matrix one_hot_rows(std::span<const ClassId> labels, const Hallucinator& h) {
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), h.head.out_dim());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int k = h.class_index(labels[i]);
        if (k < 0) throw InputError("hallucinator head has no output for class " + std::to_string(labels[i]));
        t(static_cast<Eigen::Index>(i), k) = 1.0;
    }
    return t;
}

}  // namespace

nn::GradReport composite_grad_check(const Hallucinator& h, const CompositeBatch& batch, double eps) {
    CompositeGrads g = zero_grads(h);
    composite_loss(h, batch, &g);
    std::vector<double> analytic = nn::flatten(g.p1);
    for (const auto* part : {&g.p2, &g.head}) {
        const auto f = nn::flatten(*part);
        analytic.insert(analytic.end(), f.begin(), f.end());
    }
    Hallucinator work = h;
    std::vector<double*> params = work.p1.parameter_pointers();
    for (auto* net : {&work.p2, &work.head}) {
        const auto p = net->parameter_pointers();
        params.insert(params.end(), p.begin(), p.end());
    }
    auto probe = [&]() {
        auto res = composite_loss(work, batch, nullptr);
        return nn::LossProbe{res.loss, std::move(res.pattern)};
    };
    return nn::check_gradients(params, analytic, probe, eps);
}

TrainedHallucinator train_hallucinator(std::span<const NodeRecord> v_prev, std::span<const LabeledFeature> x_r,
                                       const HallucinatorConfig& cfg, RngSeed seed) {
    cfg.validate();
    if (v_prev.empty()) throw InputError("hallucinator training: no previous nodes");
    if (x_r.empty()) throw InputError("hallucinator training: no exemplar features");
    const auto d = x_r.front().feature.size();
    for (const auto& n : v_prev)
        if (n.weight.size() != d) throw DimensionError("hallucinator training: node dimension mismatch");

    std::vector<ClassId> classes;
    for (const auto& x : x_r) classes.push_back(x.label);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    Rng rng(derive_seed(seed, 1));
    TrainedHallucinator out{cfg.init == HallucinatorInit::Residual
                                ? Hallucinator::residual(static_cast<int>(d), classes, rng)
                                : Hallucinator::random(static_cast<int>(d), classes, rng),
                            {}};
    Hallucinator& h = out.hallucinator;
    nn::Sgd opt_p1(cfg.sgd), opt_p2(cfg.sgd), opt_head(cfg.sgd);

    std::vector<ClassId> real_labels;
    for (const auto& x : x_r) real_labels.push_back(x.label);
    const Matrix real_targets = one_hot_rows(real_labels, h);

    for (int epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
        const auto batch_idx = sample_node_batch(v_prev.size(), cfg.node_batch, rng);
        std::vector<NodeRecord> batch;
        batch.reserve(batch_idx.size());
        for (std::size_t i : batch_idx) batch.push_back(v_prev[i]);
        const Pairing pairing = pair_same_class(batch, x_r, derive_seed(seed, 2, static_cast<std::uint64_t>(epoch)));

        // Training set for this epoch: every exemplar plus one hallucination per pair.
        const std::size_t n_real = x_r.size();
        const std::size_t n_aug = pairing.pairs.size();
        std::vector<std::size_t> order(n_real + n_aug);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        EpochStats stats;
        stats.exemplar_count = n_real;
        stats.augmented_count = n_aug;
        stats.train_size = order.size();
        stats.skipped = pairing.skipped;
        std::size_t correct = 0, n_batches = 0;
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> aug_rows, real_rows;
            for (std::size_t i = start; i < end; ++i) {
                if (order[i] < n_real) real_rows.push_back(order[i]);
                else aug_rows.push_back(order[i] - n_real);
            }
            CompositeBatch mb;
            mb.nodes.resize(static_cast<Eigen::Index>(aug_rows.size()), d);
            mb.exemplars.resize(static_cast<Eigen::Index>(aug_rows.size()), d);
            std::vector<ClassId> aug_labels;
            for (std::size_t r = 0; r < aug_rows.size(); ++r) {
                const Pair& p = pairing.pairs[aug_rows[r]];
                mb.nodes.row(static_cast<Eigen::Index>(r)) = batch[p.node].weight.transpose();
                mb.exemplars.row(static_cast<Eigen::Index>(r)) = x_r[p.exemplar].feature.transpose();
                aug_labels.push_back(p.label);
            }
            mb.aug_targets = one_hot_rows(aug_labels, h);
            mb.real_features.resize(static_cast<Eigen::Index>(real_rows.size()), d);
            mb.real_targets.resize(static_cast<Eigen::Index>(real_rows.size()), h.head.out_dim());
            for (std::size_t r = 0; r < real_rows.size(); ++r) {
                mb.real_features.row(static_cast<Eigen::Index>(r)) = x_r[real_rows[r]].feature.transpose();
                mb.real_targets.row(static_cast<Eigen::Index>(r)) = real_targets.row(static_cast<Eigen::Index>(real_rows[r]));
            }

            CompositeGrads g = zero_grads(h);
            const auto res = composite_loss(h, mb, &g);
            if (!std::isfinite(res.loss)) throw NumericError("hallucinator training diverged");
            loss_sum += res.loss;
            correct += res.correct;
            ++n_batches;
            opt_p1.step(h.p1, g.p1, epoch);
            opt_p2.step(h.p2, g.p2, epoch);
            opt_head.step(h.head, g.head, epoch);
        }
        stats.loss = loss_sum / static_cast<double>(n_batches);
        stats.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        out.epochs.push_back(stats);
    }
    return out;
}

Reinitialized reinitialize_gwr(const Hallucinator& h, std::span<const NodeRecord> v_prev,
                               std::span<const LabeledFeature> x_r, const gwr::Params& params,
                               const HallucinatorConfig& cfg, RngSeed seed) {
    cfg.validate();
    if (x_r.empty()) throw InputError("re-initialization: no exemplar features");
    Reinitialized out;
    out.training_set.assign(x_r.begin(), x_r.end());
    for (int pass = 0; pass < cfg.passes; ++pass) {
        const Pairing pairing = pair_same_class(v_prev, x_r, derive_seed(seed, 3, static_cast<std::uint64_t>(pass)));
        out.skipped += pairing.skipped;
        for (auto& a : hallucinate(h, v_prev, x_r, pairing)) {
            if (!a.sample.feature.allFinite() || a.sample.feature.norm() == 0.0) {
                ++out.degenerate;
                continue;
            }
            out.training_set.push_back({l2_normalize(a.sample.feature), a.sample.label});
            ++out.augmented;
        }
    }
    if (out.training_set.size() < 2) throw InputError("re-initialization: fewer than two training features");

    Rng rng(derive_seed(seed, 4));
    std::uniform_int_distribution<std::size_t> pick(0, out.training_set.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    out.network = gwr::Network::init(out.training_set[a], out.training_set[b], params);
    out.network.fit(out.training_set, cfg.gwr_epochs, derive_seed(seed, 5));
    return out;
}

}  // namespace gwrcil::hallucination
