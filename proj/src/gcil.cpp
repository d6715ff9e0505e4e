#include "gwrcil/gcil.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gwrcil::gcil {

WeightScheme WeightScheme::parse(const std::string& name) {
    WeightScheme s;
    if (name == "uniform") s.kind = SchemeKind::Uniform;
    else if (name == "taskvaried" || name == "task_varied" || name == "task-varied") s.kind = SchemeKind::TaskVaried;
    else if (name == "longtail") s.kind = SchemeKind::LongTail;
    else throw ConfigError("unknown weight scheme '" + name + "' (uniform|taskvaried|longtail)");
    return s;
}

std::string WeightScheme::name() const {
    switch (kind) {
        case SchemeKind::Uniform: return "uniform";
        case SchemeKind::TaskVaried: return "taskvaried";
        case SchemeKind::LongTail: return "longtail";
    }
    return "uniform";
}

double longtail_mu(int n, double ratio) {
    return std::pow(ratio, -1.0 / static_cast<double>(n - 1));
}

std::vector<double> class_weights(const WeightScheme& scheme, int n, int t, RngSeed seed) {
    if (n < 2) throw ConfigError("class weights need at least two classes");
    std::vector<double> w(static_cast<std::size_t>(n), 1.0 / n);
    switch (scheme.kind) {
        case SchemeKind::Uniform:
            return w;
        case SchemeKind::TaskVaried: {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
            std::normal_distribution<double> noise(0.0, scheme.noise_frac / n);
            for (auto& x : w) x = std::max(x + noise(rng), 1e-6);
            break;
        }
        case SchemeKind::LongTail: {
            const double mu = longtail_mu(n, scheme.ratio);
            for (int i = 0; i < n; ++i) w[i] = std::pow(mu, i + 1);
            break;
        }
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    return w;
}

void GcilConfig::validate() const {
    if (n_classes < 2) throw ConfigError("gcil: need at least two classes");
    if (tasks < 1) throw ConfigError("gcil: need at least one task");
    if (task_budget < 1) throw ConfigError("gcil: task budget must be positive");
    const int kmax = effective_k_max();
    if (k_min < 1 || k_min > kmax || kmax > n_classes)
        throw ConfigError("gcil: class-count range must satisfy 1 <= k_min <= k_max <= n");
    if (k_min > task_budget) throw ConfigError("gcil: k_min exceeds the task budget");
    if (scheme.kind == SchemeKind::TaskVaried && !(scheme.noise_frac >= 0.0))
        throw ConfigError("gcil: noise fraction must be non-negative");
    if (scheme.kind == SchemeKind::LongTail && !(scheme.ratio >= 1.0))
        throw ConfigError("gcil: long-tail ratio must be at least 1");
}

std::vector<ClassId> TaskSpec::classes() const {
    std::vector<ClassId> out;
    for (std::size_t c = 0; c < indicator.size(); ++c)
        if (indicator[c]) out.push_back(static_cast<ClassId>(c));
    return out;
}

TaskSpec sample_task(const GcilConfig& cfg, int t, RngSeed seed) {
    cfg.validate();
    const int n = cfg.n_classes;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    TaskSpec spec;
    spec.t = t;

    std::uniform_int_distribution<int> k_dist(cfg.k_min, cfg.effective_k_max());
    spec.k = k_dist(rng);
    while (spec.k > cfg.task_budget) {
        ++spec.k_resamples;
        spec.k = k_dist(rng);
    }

    // Appearing classes: k draws without replacement, W1 uniform.
    std::vector<double> w1(static_cast<std::size_t>(n), 1.0);
    spec.indicator.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < spec.k; ++i) {
        std::discrete_distribution<int> pick(w1.begin(), w1.end());
        const int c = pick(rng);
        spec.indicator[c] = 1;
        w1[c] = 0.0;
    }

    spec.weights = class_weights(cfg.scheme, n, t, derive_seed(seed, 0x5eed));
    std::vector<double> restricted(static_cast<std::size_t>(n), 0.0);
    for (int c = 0; c < n; ++c)
        if (spec.indicator[c]) restricted[c] = spec.weights[c];
    spec.counts.assign(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < n; ++c) spec.counts[c] = spec.indicator[c];
    std::discrete_distribution<int> share(restricted.begin(), restricted.end());
    for (int i = 0; i < cfg.task_budget - spec.k; ++i) ++spec.counts[share(rng)];
    return spec;
}

std::string check_task(const TaskSpec& spec, const GcilConfig& cfg) {
    std::ostringstream err;
    const auto n = static_cast<std::size_t>(cfg.n_classes);
    if (spec.indicator.size() != n || spec.counts.size() != n) return "vector sizes differ from n";
    int ones = 0;
    long long total = 0;
    for (std::size_t c = 0; c < n; ++c) {
        if (spec.indicator[c] != 0 && spec.indicator[c] != 1) err << "indicator not binary; ";
        ones += spec.indicator[c];
        total += spec.counts[c];
        if (spec.indicator[c] && spec.counts[c] < 1) err << "appearing class " << c << " empty; ";
        if (!spec.indicator[c] && spec.counts[c] != 0) err << "absent class " << c << " has samples; ";
    }
    if (ones != spec.k) err << "indicator sum " << ones << " != k " << spec.k << "; ";
    if (spec.k < cfg.k_min || spec.k > cfg.effective_k_max()) err << "k out of range; ";
    if (total != cfg.task_budget) err << "counts sum " << total << " != budget; ";
    return err.str();
}

void MixupConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("mixup: alpha must be positive");
}

double sample_beta(double a, double b, Rng& rng) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    // Both gamma draws underflowing to zero is possible only for tiny shapes.
    if (x + y == 0.0) return 0.5;
    return x / (x + y);
}

MixupItem mix_pair(const MixupItem& a, const MixupItem& b, double lambda) {
    if (a.feature.size() != b.feature.size() || a.label.weights.size() != b.label.weights.size())
        throw DimensionError("mixup: pair has mismatched dimensions");
    return {lambda * a.feature + (1.0 - lambda) * b.feature,
            SoftLabel{lambda * a.label.weights + (1.0 - lambda) * b.label.weights}};
}

std::vector<MixedSample> mixup_batch(std::span<const MixupItem> batch, const MixupConfig& cfg, RngSeed seed) {
    cfg.validate();
    if (batch.size() < 2) throw InputError("mixup needs at least two samples");
    Rng rng(seed);
    std::vector<std::size_t> partner(batch.size());
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    std::shuffle(partner.begin(), partner.end(), rng);
    std::vector<MixedSample> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t j = partner[i];
        const double lambda = sample_beta(cfg.alpha, cfg.alpha, rng);
        auto mixed = mix_pair(batch[i], batch[j], lambda);
        out.push_back({std::move(mixed.feature), std::move(mixed.label), i, j, lambda});
    }
    return out;
}

BalancedSet balance_with_mixup(std::span<const RawSample> samples, const MixupConfig& cfg, RngSeed seed,
                               std::uint64_t first_id) {
    cfg.validate();
    BalancedSet out;
    out.originals.assign(samples.begin(), samples.end());
    if (samples.size() < 2) return out;

    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
    std::size_t target = 0;
    for (const auto& [c, idx] : by_class) target = std::max(target, idx.size());

    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> any(0, samples.size() - 1);
    std::uint64_t id = first_id;
    for (const auto& [c, idx] : by_class) {
        std::uniform_int_distribution<std::size_t> anchor(0, idx.size() - 1);
        for (std::size_t m = idx.size(); m < target; ++m) {
            const RawSample& a = samples[idx[anchor(rng)]];
            const RawSample& b = samples[any(rng)];
            const double raw = sample_beta(cfg.alpha, cfg.alpha, rng);
            const double lambda = std::max(raw, 1.0 - raw);
            RawSample mixed;
            mixed.latent = lambda * a.latent + (1.0 - lambda) * b.latent;
            mixed.label = c;
            mixed.id = id++;
            out.mixed.push_back(std::move(mixed));
            out.mixed_lambda.push_back(lambda);
        }
    }
    return out;
}

std::vector<std::size_t> ExemplarMemory::quotas(std::size_t capacity, std::size_t seen) {
    std::vector<std::size_t> q(seen, 0);
    if (seen == 0) return q;
    const std::size_t base = capacity / seen;
    const std::size_t rem = capacity % seen;
    for (std::size_t i = 0; i < seen; ++i) q[i] = base + (i < rem ? 1 : 0);
    return q;
}

void ExemplarMemory::update(std::span<const RawSample> new_samples, const FeatureFn& features, RngSeed seed) {
    for (const auto& s : new_samples) store_[s.label].push_back(s);
    const auto q = quotas(capacity_, store_.size());
    std::size_t qi = 0;
    for (auto& [c, pool] : store_) {
        const std::size_t quota = q[qi++];
        std::sort(pool.begin(), pool.end(), [](const RawSample& a, const RawSample& b) { return a.id < b.id; });
        pool.erase(std::unique(pool.begin(), pool.end(),
                               [](const RawSample& a, const RawSample& b) { return a.id == b.id; }),
                   pool.end());
        if (pool.size() <= quota) continue;

        std::vector<std::size_t> keep(pool.size());
        std::iota(keep.begin(), keep.end(), std::size_t{0});
        if (selection_ == Selection::Herding) {
            std::vector<FeatureVector> f;
            f.reserve(pool.size());
            for (const auto& s : pool) f.push_back(features(s));
            FeatureVector mean = FeatureVector::Zero(f.front().size());
            for (const auto& v : f) mean += v;
            mean /= static_cast<double>(f.size());
            std::vector<double> dist(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) dist[i] = (f[i] - mean).norm();
            // Pool is sorted by id, so stable ordering breaks distance ties by id.
            std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
        } else {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
            std::shuffle(keep.begin(), keep.end(), rng);
        }
        keep.resize(quota);
        std::sort(keep.begin(), keep.end());
        std::vector<RawSample> kept;
        kept.reserve(quota);
        for (std::size_t i : keep) kept.push_back(std::move(pool[i]));
        pool = std::move(kept);
    }
}

std::size_t ExemplarMemory::size() const {
    std::size_t n = 0;
    for (const auto& [c, pool] : store_) n += pool.size();
    return n;
}

std::vector<ClassId> ExemplarMemory::seen_classes() const {
    std::vector<ClassId> out;
    for (const auto& [c, pool] : store_) out.push_back(c);
    return out;
}

std::vector<RawSample> ExemplarMemory::samples() const {
    std::vector<RawSample> out;
    for (const auto& [c, pool] : store_) out.insert(out.end(), pool.begin(), pool.end());
    return out;
}

}  // namespace gwrcil::gcil
