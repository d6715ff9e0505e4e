#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwrcil/extractor.hpp"
#include "gwrcil/gcil.hpp"
#include "gwrcil/gwr.hpp"
#include "gwrcil/hallucinator.hpp"

// End-to-end incremental run: task stream, drifting extractor, replay memory,
// mixup, optional hallucinator-driven re-initialization and GWR training, with
// balanced top-1 evaluation after every task.
namespace gwrcil::harness {

enum class Mode {
    Reinit,   // re-initialize the network from hallucinated features each task
    Stale,    // keep training the previous task's network (GWR-only baseline)
    Full,     // fresh network on all data seen so far (upper-bound analogue)
};

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);

struct WorldConfig {
    int dim = 16;
    double sep = 6.0;
    double sigma = 1.0;
    double offset = 0.0;
};

struct RunConfig {
    gcil::GcilConfig gcil;
    WorldConfig world;
    extractor::DriftConfig drift{0.39269908169872414};  // pi/8 per task
    gwr::Params gwr;
    int gwr_epochs = 3;
    hallucination::HallucinatorConfig hallucinator;
    gcil::MixupConfig mixup;
    bool mixup_for_gwr = true;  // mixed samples enter GWR with their anchor label
    int memory_per_class = 20;
    long long memory_capacity = -1;  // -1: memory_per_class * n_classes
    gcil::Selection selection = gcil::Selection::Herding;
    int per_class_test = 50;
    Mode mode = Mode::Reinit;
    std::vector<RngSeed> seeds{1};
    std::string output_dir = "out";
    bool record_wallclock = true;

    std::size_t effective_memory_capacity() const;
    /// Throws ConfigError on any inconsistency.
    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

/// Error raised by run_experiment; carries the failing task.
class RunError : public Error {
public:
    RunError(int task, const std::string& what)
        : Error("task " + std::to_string(task) + ": " + what), task_(task) {}
    int task() const { return task_; }

private:
    int task_;
};

struct TaskMetrics {
    int task = 0;
    double accuracy = 0.0;
    std::size_t nodes = 0;
    double wallclock_ms = 0.0;
    std::size_t seen_classes = 0;
    std::size_t hallucinated = 0;
    std::size_t pairing_skips = 0;
};

struct Metrics {
    std::string label;
    RngSeed seed = 0;
    std::vector<TaskMetrics> tasks;
    std::vector<gcil::TaskSpec> task_specs;
    std::vector<std::string> trace;  // ordered pipeline events, "t<task>:<event>"
    std::size_t hallucinator_trainings = 0;
    std::size_t k_resamples = 0;
    std::size_t degenerate_hallucinations = 0;
    std::size_t growth_capped = 0;
    std::vector<std::string> deviation_flags;

    double mean_accuracy() const;
};

Metrics run_experiment(const RunConfig& cfg, RngSeed seed);

/// One run per configured seed, in parallel; results in seed order.
std::vector<Metrics> run_seeds(const RunConfig& cfg);

using Predictor = std::function<ClassId(const FeatureVector&)>;

/// Balanced top-1: per_class_test fresh samples of every seen class,
/// extracted with the current extractor.
double evaluate_top1(const Predictor& predict, const extractor::DriftingExtractor& e,
                     const extractor::SyntheticWorld& world, std::span<const ClassId> seen_classes,
                     int per_class_test, RngSeed seed);
double evaluate_top1(const gwr::Network& g, const extractor::DriftingExtractor& e,
                     const extractor::SyntheticWorld& world, std::span<const ClassId> seen_classes,
                     int per_class_test, int k, RngSeed seed);

// Output emission.

struct SummaryRow {
    std::string config;
    int task = 0;
    std::size_t runs = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // sample standard deviation (n - 1); 0 for one run
    double mean_nodes = 0.0;
};

std::vector<SummaryRow> summarize(std::span<const Metrics> runs);

std::string run_csv(const Metrics& m, bool record_wallclock);
std::string summary_csv(std::span<const SummaryRow> rows);
std::vector<SummaryRow> parse_summary_csv(const std::string& text);
/// Mean +/- std accuracy per task, one polyline per configuration.
std::string render_svg(std::span<const SummaryRow> rows);
nlohmann::json run_manifest(const Metrics& m, const RunConfig& cfg);

struct EmittedFiles {
    std::vector<std::string> run_csvs;
    std::vector<std::string> manifests;
    std::string summary_csv;
    std::string svg;
};

/// Writes <label>_seed<seed>.csv and <label>_seed<seed>_manifest.json per
/// run plus summary.csv and accuracy.svg. IoError when unwritable.
EmittedFiles emit_outputs(std::span<const Metrics> runs, const RunConfig& cfg, const std::string& dir);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace gwrcil::harness
