#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gwrcil/errors.hpp"

namespace gwrcil {

/// d-dimensional real feature. All arithmetic is double precision.
using FeatureVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Class index in [0, n) for a run with n classes.
using ClassId = std::int32_t;

/// Seed for a deterministic pseudo-random stream.
using RngSeed = std::uint64_t;
using Rng = std::mt19937_64;

struct LabeledFeature {
    FeatureVector feature;
    ClassId label = 0;
};

/// Probability vector over classes (non-negative, sums to one).
struct SoftLabel {
    Eigen::VectorXd weights;

    static SoftLabel one_hot(ClassId c, int n_classes);
    /// Index of the largest weight; lowest index wins ties.
    ClassId dominant() const;
};

/// Tolerance used when checking that an input is unit-norm.
inline constexpr double kUnitNormTolerance = 1e-6;

/// Scales v to unit L2 norm. Throws NormalizationError for a zero or
/// non-finite vector.
FeatureVector l2_normalize(const FeatureVector& v);

bool is_unit_norm(const FeatureVector& v, double tol = kUnitNormTolerance);

/// Throws DimensionError on size mismatch.
double euclidean_distance(const FeatureVector& a, const FeatureVector& b);

/// True when every entry is finite.
bool all_finite(const FeatureVector& v);

/// Derives an independent 64-bit seed from a parent seed and a stream tag
/// (splitmix64 finalizer over the combined words).
RngSeed derive_seed(RngSeed parent, std::uint64_t tag);
RngSeed derive_seed(RngSeed parent, std::uint64_t tag, std::uint64_t sub);

}  // namespace gwrcil
