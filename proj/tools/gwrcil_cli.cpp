// Command-line front end: run experiments, validate configs, check gradients
// and re-plot summaries.

#include <cmath>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gwrcil/harness.hpp"
#include "gwrcil/hallucinator.hpp"

using namespace gwrcil;

namespace {

std::vector<RngSeed> parse_seed_list(const std::string& text) {
    std::vector<RngSeed> seeds;
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ',');) {
        if (tok.empty()) continue;
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != tok.size()) throw ConfigError("bad seed '" + tok + "'");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw ConfigError("empty seed list");
    return seeds;
}

int cmd_gradcheck(int seeds, int dim) {
    double worst = 0.0;
    std::size_t skipped = 0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(static_cast<RngSeed>(s), 77));
        const std::vector<ClassId> classes{0, 1, 2};
        auto h = hallucination::Hallucinator::random(dim, classes, rng);
        hallucination::CompositeBatch b;
        std::normal_distribution<double> normal(0.0, 1.0);
        auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
            Matrix m(r, c);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
            return m;
        };
        b.nodes = random_matrix(6, dim);
        b.exemplars = random_matrix(6, dim);
        b.real_features = random_matrix(4, dim);
        b.aug_targets = Matrix::Zero(6, 3);
        b.real_targets = Matrix::Zero(4, 3);
        for (int i = 0; i < 6; ++i) b.aug_targets(i, i % 3) = 1.0;
        for (int i = 0; i < 4; ++i) b.real_targets(i, (i + 1) % 3) = 1.0;
        const auto report = hallucination::composite_grad_check(h, b, 1e-5);
        worst = std::max(worst, report.max_relative_error);
        skipped += report.skipped_kinks;
        std::cout << "seed " << s << ": max relative error " << report.max_relative_error << " over "
                  << report.errors.size() << " parameters (" << report.skipped_kinks << " kink-skipped)\n";
    }
    const bool ok = worst < 1e-4;
    std::cout << (ok ? "PASS" : "FAIL") << " max relative error " << worst << " (threshold 1e-4)\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grow-When-Required class-incremental experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment and write CSV/SVG outputs");
    std::string config_path, seeds_text, scheme, out_dir;
    std::optional<unsigned long long> seed;
    std::optional<int> tasks, k;
    bool no_reinit = false, full = false, ablation = false;
    run->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "single seed");
    run->add_option("--seeds", seeds_text, "comma-separated seeds");
    run->add_option("--scheme", scheme, "class-size weights")->check(CLI::IsMember({"uniform", "taskvaried", "longtail"}));
    run->add_flag("--no-sathur", no_reinit, "GWR-only baseline: keep training the stale network");
    run->add_flag("--full-upper-bound", full, "retrain a fresh network on all data seen so far");
    run->add_flag("--ablation", ablation, "run reinit, gwr_only and full side by side");
    run->add_option("--tasks", tasks, "number of tasks");
    run->add_option("--k", k, "inference neighbours");
    run->add_option("--out", out_dir, "output directory");

    auto* validate = app.add_subcommand("validate-config", "parse and check a config file");
    std::string validate_path;
    validate->add_option("--config", validate_path, "JSON config file")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the hallucinator gradients");
    int gc_seeds = 20, gc_dim = 8;
    gradcheck->add_option("--seeds", gc_seeds, "number of random networks");
    gradcheck->add_option("--dim", gc_dim, "feature dimension");

    auto* plot = app.add_subcommand("plot", "render a summary CSV as SVG");
    std::string plot_from, plot_out;
    plot->add_option("--from", plot_from, "summary.csv")->required();
    plot->add_option("--out", plot_out, "output SVG")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const auto cfg = harness::load_config(validate_path);
            std::cout << "config OK: " << cfg.gcil.n_classes << " classes, " << cfg.gcil.tasks << " tasks, mode "
                      << harness::mode_name(cfg.mode) << '\n';
            return 0;
        }
        if (*gradcheck) return cmd_gradcheck(gc_seeds, gc_dim);
        if (*plot) {
            const auto rows = harness::parse_summary_csv(harness::read_text_file(plot_from));
            harness::write_text_file(plot_out, harness::render_svg(rows));
            std::cout << "wrote " << plot_out << '\n';
            return 0;
        }

        auto cfg = harness::load_config(config_path);
        if (seed) cfg.seeds = {*seed};
        if (!seeds_text.empty()) cfg.seeds = parse_seed_list(seeds_text);
        if (!scheme.empty()) cfg.gcil.scheme.kind = gcil::WeightScheme::parse(scheme).kind;
        if (tasks) cfg.gcil.tasks = *tasks;
        if (k) cfg.gwr.k = *k;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (no_reinit && full) throw ConfigError("--no-sathur and --full-upper-bound are exclusive");
        if (no_reinit) cfg.mode = harness::Mode::Stale;
        if (full) cfg.mode = harness::Mode::Full;
        cfg.validate();

        std::vector<harness::Metrics> runs;
        const std::vector<harness::Mode> modes = ablation
            ? std::vector<harness::Mode>{harness::Mode::Reinit, harness::Mode::Stale, harness::Mode::Full}
            : std::vector<harness::Mode>{cfg.mode};
        for (auto mode : modes) {
            auto c = cfg;
            c.mode = mode;
            for (auto& m : harness::run_seeds(c)) {
                std::cout << m.label << " seed " << m.seed << ": mean top-1 " << m.mean_accuracy() << '\n';
                runs.push_back(std::move(m));
            }
        }
        const auto files = harness::emit_outputs(runs, cfg, cfg.output_dir);
        std::cout << "wrote " << files.summary_csv << " and " << files.svg << '\n';
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
