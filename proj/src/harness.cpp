#include "gwrcil/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <set>

namespace gwrcil::harness {

using nlohmann::json;

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Reinit: return "reinit";
        case Mode::Stale: return "gwr_only";
        case Mode::Full: return "full";
    }
    return "reinit";
}

Mode parse_mode(const std::string& name) {
    if (name == "reinit") return Mode::Reinit;
    if (name == "gwr_only") return Mode::Stale;
    if (name == "full") return Mode::Full;
    throw ConfigError("unknown mode '" + name + "' (reinit|gwr_only|full)");
}

std::size_t RunConfig::effective_memory_capacity() const {
    if (memory_capacity >= 0) return static_cast<std::size_t>(memory_capacity);
    return static_cast<std::size_t>(memory_per_class) * static_cast<std::size_t>(gcil.n_classes);
}

void RunConfig::validate() const {
    gcil.validate();
    gwr.validate();
    hallucinator.validate();
    mixup.validate();
    if (world.dim < 2) throw ConfigError("world: dimension must be at least 2");
    if (!(world.sep > 0.0) || !(world.sigma > 0.0)) throw ConfigError("world: sep and sigma must be positive");
    if (!(world.offset >= 0.0)) throw ConfigError("world: offset must be non-negative");
    if (drift.planes > world.dim / 2) throw ConfigError("drift: more planes than fit in the dimension");
    if (drift.bias_step < 0.0) throw ConfigError("drift: bias_step must be non-negative");
    if (gwr_epochs < 1) throw ConfigError("gwr epochs must be positive");
    if (memory_per_class < 0) throw ConfigError("memory per class must be non-negative");
    if (per_class_test < 1) throw ConfigError("per_class_test must be positive");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
}

namespace {

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in config section '" + section + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const json& j) {
    RunConfig c;
    try {
        reject_unknown(j, "root", {"gcil", "world", "drift", "gwr", "hallucinator", "mixup", "memory", "eval",
                                   "mode", "seeds", "output_dir", "record_wallclock"});
        if (j.contains("gcil")) {
            const auto& g = j.at("gcil");
            reject_unknown(g, "gcil", {"n_classes", "tasks", "task_budget", "k_min", "k_max", "scheme",
                                       "noise_frac", "longtail_ratio"});
            read(g, "n_classes", c.gcil.n_classes);
            read(g, "tasks", c.gcil.tasks);
            read(g, "task_budget", c.gcil.task_budget);
            read(g, "k_min", c.gcil.k_min);
            read(g, "k_max", c.gcil.k_max);
            if (g.contains("scheme")) c.gcil.scheme.kind = gcil::WeightScheme::parse(g.at("scheme").get<std::string>()).kind;
            read(g, "noise_frac", c.gcil.scheme.noise_frac);
            read(g, "longtail_ratio", c.gcil.scheme.ratio);
        }
        if (j.contains("world")) {
            const auto& w = j.at("world");
            reject_unknown(w, "world", {"dim", "sep", "sigma", "offset"});
            read(w, "dim", c.world.dim);
            read(w, "sep", c.world.sep);
            read(w, "sigma", c.world.sigma);
            read(w, "offset", c.world.offset);
        }
        if (j.contains("drift")) {
            const auto& d = j.at("drift");
            reject_unknown(d, "drift", {"strength", "planes", "bias_step", "nonlinear"});
            read(d, "strength", c.drift.strength);
            read(d, "planes", c.drift.planes);
            read(d, "bias_step", c.drift.bias_step);
            read(d, "nonlinear", c.drift.nonlinear);
        }
        if (j.contains("gwr")) {
            const auto& g = j.at("gwr");
            reject_unknown(g, "gwr", {"activity_threshold", "firing_threshold", "eps_b", "eps_n", "age_max", "h0",
                                      "alpha_b", "alpha_n", "tau_b", "tau_n", "k", "max_nodes", "epochs"});
            read(g, "activity_threshold", c.gwr.activity_threshold);
            read(g, "firing_threshold", c.gwr.firing_threshold);
            read(g, "eps_b", c.gwr.eps_b);
            read(g, "eps_n", c.gwr.eps_n);
            read(g, "age_max", c.gwr.age_max);
            read(g, "h0", c.gwr.h0);
            read(g, "alpha_b", c.gwr.alpha_b);
            read(g, "alpha_n", c.gwr.alpha_n);
            read(g, "tau_b", c.gwr.tau_b);
            read(g, "tau_n", c.gwr.tau_n);
            read(g, "k", c.gwr.k);
            if (g.contains("max_nodes") && !g.at("max_nodes").is_null())
                c.gwr.max_nodes = g.at("max_nodes").get<std::size_t>();
            read(g, "epochs", c.gwr_epochs);
        }
        if (j.contains("hallucinator")) {
            const auto& h = j.at("hallucinator");
            reject_unknown(h, "hallucinator", {"lr0", "milestones", "decay", "momentum", "weight_decay", "epochs",
                                               "batch_size", "node_batch", "passes", "gwr_epochs", "init"});
            if (h.contains("init")) {
                const auto name = h.at("init").get<std::string>();
                if (name == "residual") c.hallucinator.init = hallucination::HallucinatorInit::Residual;
                else if (name == "uniform") c.hallucinator.init = hallucination::HallucinatorInit::Uniform;
                else throw ConfigError("hallucinator: unknown init '" + name + "'");
            }
            read(h, "lr0", c.hallucinator.sgd.lr0);
            read(h, "milestones", c.hallucinator.sgd.milestones);
            read(h, "decay", c.hallucinator.sgd.decay);
            read(h, "momentum", c.hallucinator.sgd.momentum);
            read(h, "weight_decay", c.hallucinator.sgd.weight_decay);
            read(h, "epochs", c.hallucinator.sgd.epochs);
            read(h, "batch_size", c.hallucinator.batch_size);
            read(h, "node_batch", c.hallucinator.node_batch);
            read(h, "passes", c.hallucinator.passes);
            read(h, "gwr_epochs", c.hallucinator.gwr_epochs);
        }
        if (j.contains("mixup")) {
            const auto& m = j.at("mixup");
            reject_unknown(m, "mixup", {"alpha", "for_gwr"});
            read(m, "alpha", c.mixup.alpha);
            read(m, "for_gwr", c.mixup_for_gwr);
        }
        if (j.contains("memory")) {
            const auto& m = j.at("memory");
            reject_unknown(m, "memory", {"capacity", "per_class", "selection"});
            if (m.contains("capacity") && !m.at("capacity").is_null()) c.memory_capacity = m.at("capacity").get<long long>();
            read(m, "per_class", c.memory_per_class);
            if (m.contains("selection")) {
                const auto s = m.at("selection").get<std::string>();
                if (s == "herding") c.selection = gcil::Selection::Herding;
                else if (s == "random") c.selection = gcil::Selection::Random;
                else throw ConfigError("unknown memory selection '" + s + "' (herding|random)");
            }
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            reject_unknown(e, "eval", {"per_class_test"});
            read(e, "per_class_test", c.per_class_test);
        }
        if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
        read(j, "seeds", c.seeds);
        read(j, "output_dir", c.output_dir);
        read(j, "record_wallclock", c.record_wallclock);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["gcil"] = {{"n_classes", c.gcil.n_classes},   {"tasks", c.gcil.tasks},
                 {"task_budget", c.gcil.task_budget}, {"k_min", c.gcil.k_min},
                 {"k_max", c.gcil.k_max},             {"scheme", c.gcil.scheme.name()},
                 {"noise_frac", c.gcil.scheme.noise_frac}, {"longtail_ratio", c.gcil.scheme.ratio}};
    j["world"] = {{"dim", c.world.dim}, {"sep", c.world.sep}, {"sigma", c.world.sigma}, {"offset", c.world.offset}};
    j["drift"] = {{"strength", c.drift.strength}, {"planes", c.drift.planes},
                  {"bias_step", c.drift.bias_step}, {"nonlinear", c.drift.nonlinear}};
    j["gwr"] = {{"activity_threshold", c.gwr.activity_threshold}, {"firing_threshold", c.gwr.firing_threshold},
                {"eps_b", c.gwr.eps_b}, {"eps_n", c.gwr.eps_n}, {"age_max", c.gwr.age_max}, {"h0", c.gwr.h0},
                {"alpha_b", c.gwr.alpha_b}, {"alpha_n", c.gwr.alpha_n}, {"tau_b", c.gwr.tau_b},
                {"tau_n", c.gwr.tau_n}, {"k", c.gwr.k},
                {"max_nodes", c.gwr.max_nodes ? json(*c.gwr.max_nodes) : json(nullptr)},
                {"epochs", c.gwr_epochs}};
    const auto& h = c.hallucinator;
    j["hallucinator"] = {{"lr0", h.sgd.lr0}, {"milestones", h.sgd.milestones}, {"decay", h.sgd.decay},
                         {"momentum", h.sgd.momentum}, {"weight_decay", h.sgd.weight_decay},
                         {"epochs", h.sgd.epochs}, {"batch_size", h.batch_size}, {"node_batch", h.node_batch},
                         {"passes", h.passes}, {"gwr_epochs", h.gwr_epochs},
                         {"init", h.init == hallucination::HallucinatorInit::Residual ? "residual" : "uniform"}};
    j["mixup"] = {{"alpha", c.mixup.alpha}, {"for_gwr", c.mixup_for_gwr}};
    j["memory"] = {{"capacity", c.memory_capacity >= 0 ? json(c.memory_capacity) : json(nullptr)},
                   {"per_class", c.memory_per_class},
                   {"selection", c.selection == gcil::Selection::Herding ? "herding" : "random"}};
    j["eval"] = {{"per_class_test", c.per_class_test}};
    j["mode"] = mode_name(c.mode);
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir;
    j["record_wallclock"] = c.record_wallclock;
    return j;
}

RunConfig load_config(const std::string& path) {
    const std::string text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

double Metrics::mean_accuracy() const {
    if (tasks.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : tasks) s += t.accuracy;
    return s / static_cast<double>(tasks.size());
}

double evaluate_top1(const Predictor& predict, const extractor::DriftingExtractor& e,
                     const extractor::SyntheticWorld& world, std::span<const ClassId> seen_classes,
                     int per_class_test, RngSeed seed) {
    if (seen_classes.empty()) throw InputError("evaluation needs at least one seen class");
    if (per_class_test < 1) throw InputError("evaluation needs at least one sample per class");
    std::vector<int> counts(static_cast<std::size_t>(world.num_classes()), 0);
    for (ClassId c : seen_classes) {
        if (c < 0 || c >= world.num_classes()) throw InputError("evaluation class outside the world");
        counts[static_cast<std::size_t>(c)] = per_class_test;
    }
    const auto test = extractor::generate_task_data(world, counts, seed, 0);
    std::size_t correct = 0;
    for (const auto& s : test)
        if (predict(e.extract(s.latent)) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double evaluate_top1(const gwr::Network& g, const extractor::DriftingExtractor& e,
                     const extractor::SyntheticWorld& world, std::span<const ClassId> seen_classes,
                     int per_class_test, int k, RngSeed seed) {
    if (g.node_count() == 0) throw StateError("evaluation of an empty network");
    return evaluate_top1([&](const FeatureVector& x) { return g.predict(x, k); }, e, world, seen_classes,
                         per_class_test, seed);
}

namespace {

// Stream tags for derive_seed; shared by every mode so that runs with the
// same seed see the same world, tasks, drift and test sets.
enum SeedTag : std::uint64_t {
    kWorld = 11, kTasks, kData, kDrift, kMixup, kInit, kFit, kHallucinate, kEval, kMemory,
};

gwr::Network seeded_network(std::span<const LabeledFeature> data, const gwr::Params& params, RngSeed seed) {
    if (data.size() < 2) throw InputError("need at least two features to start a network");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    return gwr::Network::init(data[a], data[b], params);
}

std::vector<std::string> deviation_flags(const RunConfig& cfg) {
    std::vector<std::string> f{
        "features_l2_normalized_before_gwr",
        "classifier_head_single_linear_layer",
        "synthetic_test_samples_drawn_fresh_per_evaluation",
    };
    f.push_back(cfg.mixup_for_gwr ? "mixup_samples_enter_gwr_with_anchor_label" : "mixup_samples_excluded_from_gwr");
    if (cfg.mode == Mode::Full) f.push_back("full_mode_is_feature_level_analogue");
    return f;
}

}  // namespace

Metrics run_experiment(const RunConfig& cfg, RngSeed seed) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    Metrics m;
    m.label = mode_name(cfg.mode);
    m.seed = seed;
    m.deviation_flags = deviation_flags(cfg);

    const auto world = extractor::SyntheticWorld::make(cfg.gcil.n_classes, cfg.world.dim, cfg.world.sep,
                                                       cfg.world.sigma, derive_seed(seed, kWorld), cfg.world.offset);
    auto fx = extractor::DriftingExtractor::initial(cfg.world.dim, cfg.drift);
    gcil::ExemplarMemory memory(cfg.effective_memory_capacity(), cfg.selection);
    std::vector<extractor::RawSample> all_seen;  // Full mode only
    std::set<ClassId> seen;
    std::uint64_t next_id = 0;
    gwr::Network net;

    for (int t = 1; t <= cfg.gcil.tasks; ++t) {
        const auto started = clock::now();
        const std::string tag = "t" + std::to_string(t) + ":";
        TaskMetrics tm;
        tm.task = t;
        try {
            auto spec = gcil::sample_task(cfg.gcil, t, derive_seed(seed, kTasks));
            m.k_resamples += static_cast<std::size_t>(spec.k_resamples);
            const auto s_new = extractor::generate_task_data(world, spec.counts,
                                                             derive_seed(seed, kData, static_cast<std::uint64_t>(t)), next_id);
            next_id += s_new.size();
            for (ClassId c : spec.classes()) seen.insert(c);
            m.task_specs.push_back(std::move(spec));

            if (t >= 2) {
                fx = fx.advance(derive_seed(seed, kDrift, static_cast<std::uint64_t>(t)));
                m.trace.push_back(tag + "advance_extractor");
            }

            const RngSeed fit_seed = derive_seed(seed, kFit, static_cast<std::uint64_t>(t));
            if (cfg.mode == Mode::Full) {
                all_seen.insert(all_seen.end(), s_new.begin(), s_new.end());
                const auto x_all = fx.extract(all_seen);
                net = seeded_network(x_all, cfg.gwr, derive_seed(seed, kInit, static_cast<std::uint64_t>(t)));
                net.fit(x_all, cfg.gwr_epochs, fit_seed);
                m.trace.push_back(tag + "train_gwr");
            } else {
                std::vector<extractor::RawSample> s_train = s_new;
                const auto replay = memory.samples();
                s_train.insert(s_train.end(), replay.begin(), replay.end());
                const auto balanced = gcil::balance_with_mixup(
                    s_train, cfg.mixup, derive_seed(seed, kMixup, static_cast<std::uint64_t>(t)), next_id);
                next_id += balanced.mixed.size();
                auto x_mix = fx.extract(balanced.originals);
                if (cfg.mixup_for_gwr) {
                    const auto x_mixed = fx.extract(balanced.mixed);
                    x_mix.insert(x_mix.end(), x_mixed.begin(), x_mixed.end());
                }

                if (t >= 2 && cfg.mode == Mode::Reinit) {
                    const auto x_r = fx.extract(replay);
                    m.trace.push_back(tag + "reextract_exemplars");
                    const auto v_prev = hallucination::node_records(net);
                    const RngSeed hs = derive_seed(seed, kHallucinate, static_cast<std::uint64_t>(t));
                    const auto trained = hallucination::train_hallucinator(v_prev, x_r, cfg.hallucinator, hs);
                    ++m.hallucinator_trainings;
                    m.trace.push_back(tag + "train_hallucinator");
                    auto re = hallucination::reinitialize_gwr(trained.hallucinator, v_prev, x_r, cfg.gwr,
                                                              cfg.hallucinator, derive_seed(hs, 1));
                    tm.hallucinated = re.augmented;
                    tm.pairing_skips = re.skipped;
                    m.degenerate_hallucinations += re.degenerate;
                    net = std::move(re.network);
                    m.trace.push_back(tag + "reinitialize_gwr");
                }
                if (t == 1) net = seeded_network(x_mix, cfg.gwr, derive_seed(seed, kInit, 1));
                net.fit(x_mix, cfg.gwr_epochs, fit_seed);
                m.trace.push_back(tag + "train_gwr");
            }

            const std::vector<ClassId> seen_list(seen.begin(), seen.end());
            tm.accuracy = evaluate_top1(net, fx, world, seen_list, cfg.per_class_test, cfg.gwr.k,
                                        derive_seed(seed, kEval, static_cast<std::uint64_t>(t)));
            tm.nodes = net.node_count();
            tm.seen_classes = seen_list.size();
            m.trace.push_back(tag + "evaluate");

            if (cfg.mode != Mode::Full) {
                memory.update(s_new, [&fx](const extractor::RawSample& s) { return fx.extract(s.latent); },
                              derive_seed(seed, kMemory, static_cast<std::uint64_t>(t)));
                m.trace.push_back(tag + "memory_update");
            }
        } catch (const RunError&) {
            throw;
        } catch (const Error& e) {
            throw RunError(t, e.what());
        }
        tm.wallclock_ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
        m.tasks.push_back(tm);
    }
    return m;
}

std::vector<Metrics> run_seeds(const RunConfig& cfg) {
    cfg.validate();
    std::vector<std::future<Metrics>> jobs;
    jobs.reserve(cfg.seeds.size());
    for (RngSeed s : cfg.seeds) jobs.push_back(std::async(std::launch::async, run_experiment, std::cref(cfg), s));
    std::vector<Metrics> out;
    out.reserve(jobs.size());
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace gwrcil::harness
