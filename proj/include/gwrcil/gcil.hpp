#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gwrcil/core.hpp"
#include "gwrcil/extractor.hpp"

// Generalized class-incremental task stream: per-task class count, class
// set and per-class sample sizes are all random. Also the replay memory and
// mixup used to build each task's training set.
namespace gwrcil::gcil {

using extractor::RawSample;

enum class SchemeKind { Uniform, TaskVaried, LongTail };

/// Per-class sample-size weights W2.
struct WeightScheme {
    SchemeKind kind = SchemeKind::Uniform;
    double noise_frac = 0.2;  // TaskVaried: noise std as a fraction of 1/n
    double ratio = 5.0;       // LongTail: largest / smallest weight

    static WeightScheme parse(const std::string& name);  // uniform|taskvaried|longtail
    std::string name() const;
};

/// Decay factor mu with mu^(1-n) = ratio.
double longtail_mu(int n, double ratio);

/// Normalized, strictly positive W2 for task t. UNIFORM is 1/n everywhere;
/// TASK_VARIED adds N(0, (noise_frac/n)^2) per class, clamped at 1e-6;
/// LONGTAIL is mu^i for i = 1..n.
std::vector<double> class_weights(const WeightScheme& scheme, int n, int t, RngSeed seed);

struct GcilConfig {
    int n_classes = 8;
    int tasks = 6;
    int task_budget = 300;
    int k_min = 1;       // class count per task ~ U{k_min, k_max}
    int k_max = -1;      // -1 means n_classes
    WeightScheme scheme;

    int effective_k_max() const { return k_max < 0 ? n_classes : k_max; }
    void validate() const;
};

struct TaskSpec {
    int t = 1;
    int k = 0;                      // number of appearing classes
    std::vector<int> indicator;     // 0/1 per class
    std::vector<int> counts;        // samples per class, 0 where absent
    std::vector<double> weights;    // W2 used for this task
    int k_resamples = 0;            // draws of k rejected for exceeding the budget

    std::vector<ClassId> classes() const;
};

/// Draws k, the appearing classes (without replacement, uniform W1) and the
/// per-class sizes (1 each plus a multinomial split of the rest by W2).
TaskSpec sample_task(const GcilConfig& cfg, int t, RngSeed seed);

/// Empty string when the task is consistent with the config.
std::string check_task(const TaskSpec& spec, const GcilConfig& cfg);

struct MixupConfig {
    double alpha = 1.2;
    void validate() const;
};

/// lambda ~ Beta(a, b) via two gamma draws.
double sample_beta(double a, double b, Rng& rng);

struct MixupItem {
    FeatureVector feature;
    SoftLabel label;
};

struct MixedSample {
    FeatureVector feature;
    SoftLabel label;
    std::size_t i = 0;
    std::size_t j = 0;
    double lambda = 1.0;
};

/// lambda * a + (1 - lambda) * b for features and labels.
MixupItem mix_pair(const MixupItem& a, const MixupItem& b, double lambda);

/// One output per input: anchor i paired with j from a seeded shuffle, fresh
/// lambda per output. InputError for fewer than two items.
std::vector<MixedSample> mixup_batch(std::span<const MixupItem> batch, const MixupConfig& cfg, RngSeed seed);

/// Tops every appearing class up to the largest class count with mixed
/// samples anchored in that class. The anchor takes the coefficient
/// max(lambda, 1 - lambda), so the hard label of a mixed sample is the anchor
/// class. Mixed samples get ids from first_id upward.
struct BalancedSet {
    std::vector<RawSample> originals;
    std::vector<RawSample> mixed;
    std::vector<double> mixed_lambda;
};
BalancedSet balance_with_mixup(std::span<const RawSample> samples, const MixupConfig& cfg, RngSeed seed,
                               std::uint64_t first_id);

enum class Selection { Herding, Random };

/// Fixed-capacity store of raw samples, quota-balanced over all seen classes.
class ExemplarMemory {
public:
    using FeatureFn = std::function<FeatureVector(const RawSample&)>;

    explicit ExemplarMemory(std::size_t capacity, Selection selection = Selection::Herding)
        : capacity_(capacity), selection_(selection) {}

    /// floor(B / seen) each, remainder to the lowest class ids.
    static std::vector<std::size_t> quotas(std::size_t capacity, std::size_t seen);

    /// Adds candidates, recomputes quotas and keeps per class the samples
    /// whose features (under `features`) are nearest the class mean.
    void update(std::span<const RawSample> new_samples, const FeatureFn& features, RngSeed seed);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const;
    const std::map<ClassId, std::vector<RawSample>>& store() const { return store_; }
    std::vector<ClassId> seen_classes() const;
    /// All stored samples, by class then id.
    std::vector<RawSample> samples() const;

private:
    std::size_t capacity_;
    Selection selection_;
    std::map<ClassId, std::vector<RawSample>> store_;  // every seen class has an entry
};

}  // namespace gwrcil::gcil
