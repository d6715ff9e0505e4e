#include "gwrcil/core.hpp"

#include <cmath>
#include <string>

namespace gwrcil {

SoftLabel SoftLabel::one_hot(ClassId c, int n_classes) {
    if (c < 0 || c >= n_classes) {
        throw InputError("class id " + std::to_string(c) + " outside [0, " +
                         std::to_string(n_classes) + ")");
    }
    SoftLabel y{Eigen::VectorXd::Zero(n_classes)};
    y.weights[c] = 1.0;
    return y;
}

ClassId SoftLabel::dominant() const {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < weights.size(); ++i) {
        if (weights[i] > weights[best]) best = i;
    }
    return static_cast<ClassId>(best);
}

bool all_finite(const FeatureVector& v) {
    return v.allFinite();
}

FeatureVector l2_normalize(const FeatureVector& v) {
    if (v.size() == 0) throw NormalizationError("cannot normalize an empty vector");
    if (!v.allFinite()) throw NormalizationError("cannot normalize a non-finite vector");
    const double norm = v.norm();
    if (norm == 0.0) throw NormalizationError("cannot normalize the zero vector");
    return v / norm;
}

bool is_unit_norm(const FeatureVector& v, double tol) {
    return v.size() > 0 && std::abs(v.norm() - 1.0) <= tol;
}

double euclidean_distance(const FeatureVector& a, const FeatureVector& b) {
    if (a.size() != b.size()) {
        throw DimensionError("distance between vectors of dimension " +
                             std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    return (a - b).norm();
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

RngSeed derive_seed(RngSeed parent, std::uint64_t tag) {
    return splitmix64(splitmix64(parent) ^ (tag * 0xd6e8feb86659fd93ULL));
}

RngSeed derive_seed(RngSeed parent, std::uint64_t tag, std::uint64_t sub) {
    return derive_seed(derive_seed(parent, tag), sub);
}

}  // namespace gwrcil
