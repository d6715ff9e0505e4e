#include <doctest.h>

#include <gwrcil/errors.hpp>
#include <gwrcil/gcil.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace gwrcil;
using namespace gwrcil::gcil;

namespace {

RawSample raw(ClassId label, std::uint64_t id, std::initializer_list<double> xs) {
    FeatureVector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return {v, label, id};
}

FeatureVector identity_features(const RawSample& s) { return s.latent; }

}  // namespace

TEST_CASE("uniform weights") {
    const auto w = class_weights(WeightScheme{}, 4, 1, 1);
    for (double x : w) CHECK(x == doctest::Approx(0.25));
}

TEST_CASE("long-tail weights") {
    const double mu = longtail_mu(100, 5.0);
    // Bisection on mu^(1-n) = 5 as an independent solve.
    double lo = 0.5, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2.0;
        (std::pow(mid, -99.0) > 5.0 ? lo : hi) = mid;
    }
    CHECK(mu == doctest::Approx(lo).epsilon(1e-12));
    CHECK(mu == doctest::Approx(0.98388).epsilon(1e-5));

    const auto w = class_weights(WeightScheme::parse("longtail"), 100, 1, 1);
    CHECK(std::abs(w.front() / w.back() - 5.0) < 1e-9);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0));
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] < w[i - 1]);
}

TEST_CASE("task-varied weights are positive and vary by task") {
    const auto scheme = WeightScheme::parse("taskvaried");
    const auto a = class_weights(scheme, 10, 1, 7);
    const auto b = class_weights(scheme, 10, 2, 7);
    CHECK(a != b);
    for (double x : a) CHECK(x > 0.0);
    CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(1.0));
    CHECK(class_weights(scheme, 10, 1, 7) == a);
    CHECK_THROWS_AS(WeightScheme::parse("zipf"), ConfigError);
}

TEST_CASE("sampled tasks respect the budget") {
    for (const char* name : {"uniform", "taskvaried", "longtail"}) {
        GcilConfig cfg;
        cfg.n_classes = 10;
        cfg.task_budget = 57;
        cfg.scheme = WeightScheme::parse(name);
        for (int t = 1; t <= 2000; ++t) {
            const auto spec = sample_task(cfg, t, 99);
            CHECK(check_task(spec, cfg).empty());
            CHECK(std::accumulate(spec.counts.begin(), spec.counts.end(), 0) == 57);
            CHECK(std::accumulate(spec.indicator.begin(), spec.indicator.end(), 0) == spec.k);
            for (int c = 0; c < 10; ++c) CHECK((spec.counts[c] >= 1) == (spec.indicator[c] == 1));
        }
    }
}

TEST_CASE("forcing k to n selects every class") {
    GcilConfig cfg;
    cfg.k_min = cfg.k_max = cfg.n_classes;
    const auto spec = sample_task(cfg, 3, 1);
    for (int s : spec.indicator) CHECK(s == 1);
}

TEST_CASE("a budget below k forces resampling") {
    GcilConfig cfg;
    cfg.n_classes = 10;
    cfg.task_budget = 3;
    int resamples = 0;
    for (int t = 1; t <= 200; ++t) {
        const auto spec = sample_task(cfg, t, 5);
        CHECK(spec.k <= 3);
        CHECK(check_task(spec, cfg).empty());
        resamples += spec.k_resamples;
    }
    CHECK(resamples > 0);
}

TEST_CASE("sampling is deterministic per seed and task") {
    GcilConfig cfg;
    const auto a = sample_task(cfg, 4, 11);
    const auto b = sample_task(cfg, 4, 11);
    CHECK(a.counts == b.counts);
    CHECK(a.indicator == b.indicator);
}

TEST_CASE("long-tail sample shares match the weights") {
    GcilConfig cfg;
    cfg.n_classes = 10;
    cfg.task_budget = 200;
    cfg.scheme = WeightScheme::parse("longtail");
    const double mu = longtail_mu(10, 5.0);
    std::vector<double> target(10);
    for (int i = 0; i < 10; ++i) target[i] = std::pow(mu, i + 1);
    const double tsum = std::accumulate(target.begin(), target.end(), 0.0);
    for (double& x : target) x /= tsum;

    // Each appearing class gets 1 + Binomial(B - K, w_i / W_S) samples, so
    // sum(excess_i) / sum((B - K) / W_S) over tasks where i appears estimates w_i.
    std::vector<double> num(10, 0.0), den(10, 0.0);
    for (int t = 1; t <= 10000; ++t) {
        const auto spec = sample_task(cfg, t, 2024);
        double ws = 0.0;
        for (int i = 0; i < 10; ++i)
            if (spec.indicator[i]) ws += spec.weights[i];
        for (int i = 0; i < 10; ++i) {
            if (!spec.indicator[i]) continue;
            num[i] += spec.counts[i] - 1;
            den[i] += (cfg.task_budget - spec.k) / ws;
        }
    }
    std::vector<double> est(10);
    for (int i = 0; i < 10; ++i) est[i] = num[i] / den[i];
    const double esum = std::accumulate(est.begin(), est.end(), 0.0);
    double l1 = 0.0;
    for (int i = 0; i < 10; ++i) l1 += std::abs(est[i] / esum - target[i]);
    CHECK(l1 < 0.02);
}

TEST_CASE("beta draws are symmetric around one half") {
    Rng rng(8);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double l = sample_beta(1.2, 1.2, rng);
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
        sum += l;
    }
    CHECK(sum / 10000.0 >= 0.49);
    CHECK(sum / 10000.0 <= 0.51);
}

TEST_CASE("mix_pair interpolates features and labels") {
    MixupItem a{FeatureVector::Constant(3, 2.0), SoftLabel::one_hot(0, 2)};
    MixupItem b{FeatureVector::Constant(3, 4.0), SoftLabel::one_hot(1, 2)};
    const auto same = mix_pair(a, b, 1.0);
    CHECK(same.feature == a.feature);
    CHECK(same.label.weights == a.label.weights);
    const auto mid = mix_pair(a, b, 0.5);
    CHECK(mid.feature == FeatureVector::Constant(3, 3.0));
    CHECK(mid.label.weights(0) == 0.5);
    CHECK(mid.label.weights(1) == 0.5);
}

TEST_CASE("mixup batch outputs are exact interpolations") {
    Rng rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<MixupItem> batch;
    for (int i = 0; i < 20; ++i) {
        FeatureVector f(4);
        for (int j = 0; j < 4; ++j) f(j) = n(rng);
        batch.push_back({f, SoftLabel::one_hot(i % 3, 3)});
    }
    const auto out = mixup_batch(batch, MixupConfig{}, 12);
    REQUIRE(out.size() == batch.size());
    for (const auto& m : out) {
        const double l = m.lambda;
        const FeatureVector expect = l * batch[m.i].feature + (1.0 - l) * batch[m.j].feature;
        CHECK((m.feature - expect).cwiseAbs().maxCoeff() == 0.0);
        CHECK(m.label.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(m.label.weights.minCoeff() >= 0.0);
    }
    CHECK_THROWS_AS(mixup_batch(std::span<const MixupItem>(batch.data(), 1), MixupConfig{}, 1), InputError);
}

TEST_CASE("balancing tops classes up with anchored mixes") {
    std::vector<RawSample> s;
    for (int i = 0; i < 6; ++i) s.push_back(raw(0, static_cast<std::uint64_t>(i), {1.0 * i, 0.0}));
    for (int i = 0; i < 2; ++i) s.push_back(raw(1, static_cast<std::uint64_t>(10 + i), {0.0, 1.0 + i}));
    const auto bal = balance_with_mixup(s, MixupConfig{}, 5, 1000);
    CHECK(bal.originals.size() == 8);
    REQUIRE(bal.mixed.size() == 4);
    for (std::size_t i = 0; i < bal.mixed.size(); ++i) {
        CHECK(bal.mixed[i].label == 1);
        CHECK(bal.mixed_lambda[i] >= 0.5);
        CHECK(bal.mixed[i].id == 1000 + i);
    }
}

TEST_CASE("memory quotas") {
    CHECK(ExemplarMemory::quotas(10, 2) == std::vector<std::size_t>{5, 5});
    CHECK(ExemplarMemory::quotas(10, 3) == std::vector<std::size_t>{4, 3, 3});
}

TEST_CASE("herding keeps the sample nearest the class mean") {
    ExemplarMemory mem(1);
    const std::vector<RawSample> cands{raw(0, 1, {0.0, 0.0}), raw(0, 2, {1.0, 0.0}), raw(0, 3, {5.0, 0.0})};
    mem.update(cands, identity_features, 1);
    // Brute force over the candidates.
    const FeatureVector mean = (cands[0].latent + cands[1].latent + cands[2].latent) / 3.0;
    std::uint64_t best = 0;
    double bd = 1e300;
    for (const auto& c : cands) {
        const double d = (c.latent - mean).norm();
        if (d < bd) bd = d, best = c.id;
    }
    REQUIRE(mem.size() == 1);
    CHECK(mem.samples().front().id == best);
}

TEST_CASE("memory stays within capacity and covers seen classes") {
    ExemplarMemory mem(12);
    Rng rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uint64_t id = 0;
    for (int task = 0; task < 5; ++task) {
        std::vector<RawSample> batch;
        for (int c = task * 2; c < task * 2 + 3; ++c)
            for (int i = 0; i < 7; ++i) batch.push_back(raw(c, id++, {n(rng), n(rng)}));
        mem.update(batch, identity_features, static_cast<RngSeed>(task));
        CHECK(mem.size() <= 12);
        for (ClassId c : mem.seen_classes())
            if (mem.seen_classes().size() <= 12) CHECK_FALSE(mem.store().at(c).empty());
    }
    ExemplarMemory random_mem(4, Selection::Random);
    std::vector<RawSample> batch;
    for (int i = 0; i < 10; ++i) batch.push_back(raw(0, static_cast<std::uint64_t>(i), {n(rng), n(rng)}));
    random_mem.update(batch, identity_features, 3);
    CHECK(random_mem.size() == 4);
}
