#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gwrcil/core.hpp"

// Feature sources. A synthetic world of Gaussian classes in a latent space,
// an extractor whose frame drifts by composed random-plane rotations from task
// to task, and ingestion of precomputed features from CSV.
namespace gwrcil::extractor {

/// A "raw" sample: what would be an image in a CNN pipeline.
struct RawSample {
    FeatureVector latent;
    ClassId label = 0;
    std::uint64_t id = 0;
};

struct SyntheticWorld {
    Matrix class_means;  // n x d
    double sigma = 1.0;
    double sep = 6.0;
    double offset = 0.0;  // distance of the shared class-cloud centre from the origin

    int num_classes() const { return static_cast<int>(class_means.rows()); }
    int dim() const { return static_cast<int>(class_means.cols()); }

    /// Means lie on a sphere of radius `sep` around a common centre at
    /// distance `offset` from the origin, pairwise at least `sep` apart.
    static SyntheticWorld make(int n_classes, int dim, double sep, double sigma, RngSeed seed,
                               double offset = 0.0);
};

/// Draws counts[c] samples of class c from N(mean_c, sigma^2 I). Ids are
/// assigned consecutively from first_id.
std::vector<RawSample> generate_task_data(const SyntheticWorld& world, std::span<const int> counts,
                                          RngSeed seed, std::uint64_t first_id);

struct DriftConfig {
    double strength = 0.0;  // rotation angle per task, radians
    int planes = -1;        // rotation planes per advance; -1 means floor(d/2)
    double bias_step = 0.0; // std of the bias random walk per advance
    bool nonlinear = false; // per-coordinate tanh squash after the linear map
};

class DriftingExtractor {
public:
    /// Task 1 extractor: identity map, zero bias.
    static DriftingExtractor initial(int dim, DriftConfig cfg);

    /// Next task's extractor: Q' = R * Q with R a rotation by `strength` in
    /// `planes` mutually orthogonal random 2-planes.
    DriftingExtractor advance(RngSeed seed) const;

    int task() const { return task_; }
    int dim() const { return static_cast<int>(q_.rows()); }
    const Matrix& rotation() const { return q_; }
    const Eigen::VectorXd& bias() const { return b_; }
    const DriftConfig& config() const { return cfg_; }

    /// Q * latent + b (squashed in nonlinear mode), before normalization.
    FeatureVector transform(const FeatureVector& latent) const;
    /// Normalized transform.
    FeatureVector extract(const FeatureVector& latent) const;
    LabeledFeature extract(const RawSample& s) const;
    std::vector<LabeledFeature> extract(std::span<const RawSample> samples) const;

    /// max |Q^T Q - I|.
    double orthogonality_error() const;

private:
    int task_ = 1;
    Matrix q_;
    Eigen::VectorXd b_;
    DriftConfig cfg_;
};

/// Rows are "label,f1,...,fd" (no header). Features are normalized on load.
std::vector<LabeledFeature> load_feature_csv(const std::string& path,
                                             std::optional<int> expected_dim = std::nullopt);
std::vector<LabeledFeature> parse_feature_csv(const std::string& text,
                                              std::optional<int> expected_dim = std::nullopt);
void write_feature_csv(const std::string& path, std::span<const LabeledFeature> rows);

}  // namespace gwrcil::extractor
