// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <gwrcil/gcil.hpp>
#include <gwrcil/gwr.hpp>
#include <gwrcil/hallucinator.hpp>
#include <gwrcil/harness.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

using namespace gwrcil;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("[%s] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

FeatureVector random_unit(Eigen::Index d, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureVector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = n(rng);
    return l2_normalize(v);
}

// A stream mixing tight clusters with uniform background points.
std::vector<LabeledFeature> mixed_stream(std::size_t n, Eigen::Index d, RngSeed seed) {
    Rng rng(seed);
    std::vector<FeatureVector> centres;
    for (int c = 0; c < 6; ++c) centres.push_back(random_unit(d, rng));
    std::normal_distribution<double> noise(0.0, 0.15);
    std::uniform_int_distribution<int> pick(0, 7);
    std::vector<LabeledFeature> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = pick(rng);
        if (c < 6) {
            FeatureVector x = centres[static_cast<std::size_t>(c)];
            for (Eigen::Index j = 0; j < d; ++j) x(j) += noise(rng);
            out.push_back({l2_normalize(x), c});
        } else {
            out.push_back({random_unit(d, rng), c});
        }
    }
    return out;
}

Outcome gwr_invariants() {
    const auto data = mixed_stream(10000, 8, 17);
    gwr::Params p;
    auto g = gwr::gwr_init(data[0], data[1], p);
    std::map<gwr::NodeId, double> last_firing;
    std::size_t violations = 0, grown = 0;
    std::string first;
    const auto flag = [&](const std::string& what) {
        if (violations++ == 0) first = what;
    };
    for (std::size_t i = 2; i < data.size(); ++i) {
        const auto& x = data[i];
        // Independent expectation from the pre-step state.
        const gwr::Node* best = nullptr;
        double bd = 0.0;
        for (const auto& n : g.nodes()) {
            const double d = (x.feature - n.weight).norm();
            if (!best || d < bd) best = &n, bd = d;
        }
        const gwr::NodeId s = best->id;
        const FeatureVector w_s = best->weight;
        const double a_s = std::exp(-bd);
        const bool should_grow = a_s < p.activity_threshold && best->firing < p.firing_threshold;

        const auto tr = g.train_step(x);
        if (tr.best != s) flag("best-matching node disagrees with scan");
        if (tr.grew != should_grow) flag("growth gating violated at step " + std::to_string(i));
        if (tr.grew) {
            ++grown;
            const gwr::Node* r = g.find_node(*tr.new_node);
            if (!r || r->weight != (w_s + x.feature) / 2.0 || r->label != x.label)
                flag("new node not at the midpoint");
        }
        const auto hygiene = gwr::check_invariants(g);
        if (!hygiene.empty()) flag(hygiene);
        for (const auto& [key, age] : g.edges())
            if (key.first >= key.second || age > p.age_max || age < 0) flag("bad edge");
        for (const auto& n : g.nodes()) {
            const auto it = last_firing.find(n.id);
            if (it != last_firing.end() && n.firing > it->second) flag("firing increased");
            last_firing[n.id] = n.firing;
        }
    }
    return {violations == 0 && grown > 0,
            std::to_string(violations) + " violations over 10000 steps, " + std::to_string(grown) +
                " insertions, final " + std::to_string(g.node_count()) + " nodes" +
                (first.empty() ? "" : ", first: " + first)};
}

ClassId knn_oracle(const gwr::Network& g, const FeatureVector& x, int k) {
    std::vector<std::pair<double, ClassId>> all;  // nodes are in id order
    for (const auto& n : g.nodes()) all.emplace_back((x - n.weight).norm(), n.label);
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
    std::map<ClassId, int> votes;
    for (std::size_t i = 0; i < kk; ++i) ++votes[all[i].second];
    int top = 0;
    for (const auto& [c, v] : votes) top = std::max(top, v);
    for (std::size_t i = 0; i < kk; ++i)
        if (votes[all[i].second] == top) return all[i].second;
    return all.front().second;
}

Outcome knn_equivalence() {
    std::size_t agree = 0, total = 0;
    for (int net_i = 0; net_i < 20; ++net_i) {
        const auto data = mixed_stream(400 + 100 * static_cast<std::size_t>(net_i % 5), 8, 100 + net_i);
        auto g = gwr::gwr_init(data[0], data[1], gwr::Params{});
        g.fit(data, 1 + net_i % 3, static_cast<RngSeed>(net_i));
        Rng rng(static_cast<RngSeed>(500 + net_i));
        std::uniform_int_distribution<int> kd(1, 9);
        for (int q = 0; q < 50; ++q) {
            const FeatureVector x = random_unit(8, rng);
            const int k = kd(rng);
            agree += g.predict(x, k) == knn_oracle(g, x, k);
            ++total;
        }
    }
    return {agree == total, std::to_string(agree) + "/" + std::to_string(total) + " instances agree"};
}

Outcome gradient_oracle() {
    double worst = 0.0;
    std::size_t checked = 0, kinks = 0;
    for (RngSeed s = 1; s <= 20; ++s) {
        Rng rng(s);
        const auto h = hallucination::Hallucinator::random(8, {0, 1, 2, 3}, rng);
        hallucination::CompositeBatch b;
        b.nodes.resize(6, 8);
        b.exemplars.resize(6, 8);
        b.aug_targets = Matrix::Zero(6, 4);
        b.real_features.resize(4, 8);
        b.real_targets = Matrix::Zero(4, 4);
        std::uniform_int_distribution<int> pick(0, 3);
        for (int i = 0; i < 6; ++i) {
            b.nodes.row(i) = random_unit(8, rng).transpose();
            b.exemplars.row(i) = random_unit(8, rng).transpose();
            b.aug_targets(i, pick(rng)) = 1.0;
        }
        for (int i = 0; i < 4; ++i) {
            b.real_features.row(i) = random_unit(8, rng).transpose();
            b.real_targets(i, pick(rng)) = 1.0;
        }
        const auto r = hallucination::composite_grad_check(h, b, 1e-5);
        worst = std::max(worst, r.max_relative_error);
        checked += r.errors.size();
        kinks += r.skipped_kinks;
    }
    return {worst < 1e-4 && checked > 0,
            fmt("max relative error %.3g over %.0f parameters (%.0f kink crossings skipped), 20 seeds", worst,
                static_cast<double>(checked), static_cast<double>(kinks))};
}

Outcome sampler_statistics() {
    const auto lt = gcil::WeightScheme::parse("longtail");
    double worst_ratio = 0.0;
    for (int n : {10, 100}) {
        const auto w = gcil::class_weights(lt, n, 1, 1);
        worst_ratio = std::max(worst_ratio, std::abs(w.front() / w.back() - 5.0));
    }

    gcil::GcilConfig cfg;
    cfg.n_classes = 10;
    cfg.task_budget = 200;
    cfg.scheme = lt;
    const double mu = gcil::longtail_mu(10, 5.0);
    std::vector<double> target(10), num(10, 0.0), den(10, 0.0);
    for (int i = 0; i < 10; ++i) target[static_cast<std::size_t>(i)] = std::pow(mu, i + 1);
    const double tsum = std::accumulate(target.begin(), target.end(), 0.0);
    std::size_t bad_specs = 0;
    for (int t = 1; t <= 10000; ++t) {
        const auto spec = gcil::sample_task(cfg, t, 77);
        if (!gcil::check_task(spec, cfg).empty() ||
            std::accumulate(spec.counts.begin(), spec.counts.end(), 0) != cfg.task_budget)
            ++bad_specs;
        double ws = 0.0;
        for (int i = 0; i < 10; ++i)
            if (spec.indicator[static_cast<std::size_t>(i)]) ws += spec.weights[static_cast<std::size_t>(i)];
        for (std::size_t i = 0; i < 10; ++i) {
            if (!spec.indicator[i]) continue;
            num[i] += spec.counts[i] - 1;
            den[i] += (cfg.task_budget - spec.k) / ws;
        }
    }
    std::vector<double> est(10);
    for (std::size_t i = 0; i < 10; ++i) est[i] = num[i] / den[i];
    const double esum = std::accumulate(est.begin(), est.end(), 0.0);
    double l1 = 0.0;
    for (std::size_t i = 0; i < 10; ++i) l1 += std::abs(est[i] / esum - target[i] / tsum);
    return {worst_ratio < 1e-9 && l1 < 0.02 && bad_specs == 0,
            fmt("ratio error %.2g, conditional share L1 %.4f, %.0f inconsistent task specs of 10000", worst_ratio,
                l1, static_cast<double>(bad_specs))};
}

Outcome mixup_exactness() {
    Rng rng(5);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_int_distribution<int> cls(0, 9);
    std::size_t inexact = 0;
    double lambda_sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        gcil::MixupItem a{FeatureVector(16), SoftLabel::one_hot(cls(rng), 10)};
        gcil::MixupItem b{FeatureVector(16), SoftLabel::one_hot(cls(rng), 10)};
        for (int j = 0; j < 16; ++j) a.feature(j) = n(rng), b.feature(j) = n(rng);
        const double l = gcil::sample_beta(1.2, 1.2, rng);
        lambda_sum += l;
        const auto m = gcil::mix_pair(a, b, l);
        const double tol = 4.0 * std::numeric_limits<double>::epsilon();
        for (int j = 0; j < 16; ++j) {
            const double e = l * a.feature(j) + (1.0 - l) * b.feature(j);
            if (std::abs(m.feature(j) - e) > tol * (std::abs(a.feature(j)) + std::abs(b.feature(j)))) ++inexact;
        }
        for (int j = 0; j < 10; ++j) {
            const double e = l * a.label.weights(j) + (1.0 - l) * b.label.weights(j);
            if (std::abs(m.label.weights(j) - e) > tol) ++inexact;
        }
        if (std::abs(m.label.weights.sum() - 1.0) > tol || m.label.weights.minCoeff() < 0.0) ++inexact;
    }
    const double mean = lambda_sum / 10000.0;
    return {inexact == 0 && mean >= 0.49 && mean <= 0.51,
            fmt("%.0f inexact entries over 10000 pairs, mean lambda %.4f", static_cast<double>(inexact), mean)};
}

harness::RunConfig ablation_config() {
    harness::RunConfig c;  // d = 16, n = 8, sep = 6 sigma, T = 6, theta = pi/8
    c.memory_capacity = 160;
    c.seeds = {1, 2, 3, 4, 5};
    c.record_wallclock = false;
    return c;
}

double mean_over(const std::vector<harness::Metrics>& runs) {
    double s = 0.0;
    for (const auto& m : runs) s += m.mean_accuracy();
    return s / static_cast<double>(runs.size());
}

Outcome drift_ablation() {
    auto cfg = ablation_config();
    std::map<harness::Mode, double> acc;
    for (harness::Mode m : {harness::Mode::Reinit, harness::Mode::Stale, harness::Mode::Full}) {
        cfg.mode = m;
        acc[m] = mean_over(harness::run_seeds(cfg));
    }
    const double with = acc[harness::Mode::Reinit], without = acc[harness::Mode::Stale],
                 full = acc[harness::Mode::Full];
    const double gap = 100.0 * (with - without);
    return {gap >= 10.0 && full >= with && full >= without,
            fmt("mean per-task top-1 reinit %.4f, gwr_only %.4f, ", with, without) +
                fmt("full %.4f; gap %.2f points (need >= 10)", full, gap)};
}

Outcome single_task() {
    auto cfg = ablation_config();
    cfg.gcil.tasks = 1;
    cfg.gcil.k_min = cfg.gcil.k_max = cfg.gcil.n_classes;
    cfg.drift.strength = 0.0;
    cfg.mode = harness::Mode::Stale;
    double worst = 1.0;
    for (const auto& m : harness::run_seeds(cfg)) worst = std::min(worst, m.tasks.front().accuracy);
    return {worst >= 0.95, fmt("lowest top-1 over 5 seeds %.4f (need >= 0.95)", worst)};
}

Outcome determinism() {
    auto cfg = ablation_config();
    cfg.seeds = {3};
    cfg.gcil.task_budget = 120;
    std::vector<std::string> dirs;
    for (int rep = 0; rep < 2; ++rep) {
        const auto dir = fs::temp_directory_path() / ("gwrcil_accept_det" + std::to_string(rep));
        fs::remove_all(dir);
        std::vector<harness::Metrics> runs;
        for (harness::Mode m : {harness::Mode::Reinit, harness::Mode::Stale, harness::Mode::Full}) {
            cfg.mode = m;
            const auto r = harness::run_seeds(cfg);
            runs.insert(runs.end(), r.begin(), r.end());
        }
        harness::emit_outputs(runs, cfg, dir.string());
        dirs.push_back(dir.string());
    }
    std::size_t compared = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
        if (entry.path().extension() != ".csv") continue;
        const auto other = fs::path(dirs[1]) / entry.path().filename();
        ++compared;
        if (!fs::exists(other) ||
            harness::read_text_file(entry.path().string()) != harness::read_text_file(other.string()))
            ++differing;
    }
    for (const auto& d : dirs) fs::remove_all(d);
    return {compared >= 4 && differing == 0,
            std::to_string(compared) + " CSV files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
    criterion("GWR invariant suite", gwr_invariants);
    criterion("kNN oracle equivalence", knn_equivalence);
    criterion("Gradient oracle", gradient_oracle);
    criterion("Sampler statistics", sampler_statistics);
    criterion("Mixup exactness", mixup_exactness);
    criterion("Drift ablation", drift_ablation);
    criterion("Single-task separability", single_task);
    criterion("Determinism", determinism);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
