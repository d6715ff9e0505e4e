#include "gwrcil/extractor.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gwrcil::extractor {

SyntheticWorld SyntheticWorld::make(int n_classes, int dim, double sep, double sigma, RngSeed seed,
                                   double offset) {
    if (n_classes < 1 || dim < 1) throw ConfigError("world: class count and dimension must be positive");
    if (!(sep > 0.0) || !(sigma > 0.0)) throw ConfigError("world: sep and sigma must be positive");
    if (!(offset >= 0.0)) throw ConfigError("world: offset must be non-negative");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SyntheticWorld w;
    w.sep = sep;
    w.sigma = sigma;
    w.offset = offset;
    FeatureVector centre(dim);
    for (int j = 0; j < dim; ++j) centre[j] = normal(rng);
    centre = offset * centre.normalized();
    w.class_means.resize(n_classes, dim);
    double radius = sep;
    int failures = 0;
    for (int c = 0; c < n_classes;) {
        FeatureVector dir(dim);
        for (int j = 0; j < dim; ++j) dir[j] = normal(rng);
        const FeatureVector mean = centre + radius * dir.normalized();
        bool ok = true;
        for (int o = 0; o < c && ok; ++o) ok = (w.class_means.row(o).transpose() - mean).norm() >= sep;
        if (ok) {
            w.class_means.row(c++) = mean.transpose();
            continue;
        }
        // Low dimensions may not fit n classes on the sphere; widen and restart.
        if (++failures > 1000) {
            radius *= 1.25;
            failures = 0;
            c = 0;
        }
    }
    return w;
}

std::vector<RawSample> generate_task_data(const SyntheticWorld& world, std::span<const int> counts,
                                          RngSeed seed, std::uint64_t first_id) {
    if (static_cast<int>(counts.size()) != world.num_classes())
        throw DimensionError("task counts do not cover the world's classes");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<RawSample> out;
    std::uint64_t id = first_id;
    for (int c = 0; c < world.num_classes(); ++c) {
        if (counts[c] < 0) throw InputError("negative class count");
        for (int i = 0; i < counts[c]; ++i) {
            RawSample s;
            s.latent = world.class_means.row(c).transpose();
            for (int j = 0; j < world.dim(); ++j) s.latent[j] += world.sigma * normal(rng);
            s.label = c;
            s.id = id++;
            out.push_back(std::move(s));
        }
    }
    return out;
}

DriftingExtractor DriftingExtractor::initial(int dim, DriftConfig cfg) {
    if (dim < 1) throw ConfigError("extractor: dimension must be positive");
    if (cfg.planes > dim / 2) throw ConfigError("extractor: more rotation planes than fit in dimension");
    DriftingExtractor e;
    e.q_ = Matrix::Identity(dim, dim);
    e.b_ = Eigen::VectorXd::Zero(dim);
    e.cfg_ = cfg;
    return e;
}

DriftingExtractor DriftingExtractor::advance(RngSeed seed) const {
    DriftingExtractor next = *this;
    next.task_ = task_ + 1;
    const int d = dim();
    const int planes = cfg_.planes < 0 ? d / 2 : cfg_.planes;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    if (cfg_.strength != 0.0 && planes > 0) {
        Matrix g(d, d);
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < d; ++i) g(i, j) = normal(rng);
        const Matrix basis = Eigen::HouseholderQR<Matrix>(g).householderQ();
        const double c = std::cos(cfg_.strength), s = std::sin(cfg_.strength);
        Matrix rot = Matrix::Identity(d, d);
        for (int p = 0; p < planes; ++p) {
            const Eigen::VectorXd u = basis.col(2 * p), v = basis.col(2 * p + 1);
            // In the (u, v) plane: u -> c u + s v, v -> -s u + c v.
            rot += (c - 1.0) * (u * u.transpose() + v * v.transpose()) + s * (v * u.transpose() - u * v.transpose());
        }
        next.q_ = rot * q_;
        if (next.orthogonality_error() > 1e-12) {
            // Re-orthonormalize while keeping column orientation.
            Eigen::HouseholderQR<Matrix> qr(next.q_);
            Matrix q = qr.householderQ();
            const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
            for (int j = 0; j < d; ++j)
                if (r(j, j) < 0) q.col(j) = -q.col(j);
            next.q_ = q;
        }
    }
    if (cfg_.bias_step > 0.0) {
        for (int j = 0; j < d; ++j) next.b_[j] += cfg_.bias_step * normal(rng);
    }
    return next;
}

FeatureVector DriftingExtractor::transform(const FeatureVector& latent) const {
    if (latent.size() != q_.cols())
        throw DimensionError("extractor: latent has dimension " + std::to_string(latent.size()) +
                             ", extractor expects " + std::to_string(q_.cols()));
    FeatureVector z = q_ * latent + b_;
    if (cfg_.nonlinear) z = z.array().tanh().matrix();
    return z;
}

FeatureVector DriftingExtractor::extract(const FeatureVector& latent) const {
    return l2_normalize(transform(latent));
}

LabeledFeature DriftingExtractor::extract(const RawSample& s) const {
    return {extract(s.latent), s.label};
}

std::vector<LabeledFeature> DriftingExtractor::extract(std::span<const RawSample> samples) const {
    std::vector<LabeledFeature> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(extract(s));
    return out;
}

double DriftingExtractor::orthogonality_error() const {
    return (q_.transpose() * q_ - Matrix::Identity(q_.rows(), q_.cols())).cwiseAbs().maxCoeff();
}

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<LabeledFeature> parse_feature_csv(const std::string& text, std::optional<int> expected_dim) {
    std::vector<LabeledFeature> rows;
    std::istringstream in(text);
    std::string line;
    long long dim = expected_dim ? *expected_dim : -1;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty()) continue;
        const std::string where = "feature csv line " + std::to_string(line_no) + ": ";
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = view.find(',', start);
            fields.push_back(trim(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() < 2) throw FormatError(where + "needs a label and at least one feature");

        ClassId label = 0;
        const auto lf = fields[0];
        auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (ec != std::errc() || ptr != lf.data() + lf.size() || label < 0)
            throw FormatError(where + "bad label '" + std::string(lf) + "'");

        const long long d = static_cast<long long>(fields.size()) - 1;
        if (dim < 0) dim = d;
        if (d != dim)
            throw FormatError(where + "expected " + std::to_string(dim) + " features, found " + std::to_string(d));

        FeatureVector f(d);
        for (long long j = 0; j < d; ++j) {
            const std::string tok(fields[j + 1]);
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
                throw FormatError(where + "non-numeric field '" + tok + "'");
            f[j] = v;
        }
        try {
            rows.push_back({l2_normalize(f), label});
        } catch (const NormalizationError&) {
            throw FormatError(where + "zero feature vector");
        }
    }
    if (rows.empty()) throw FormatError("feature csv: no rows");
    return rows;
}

std::vector<LabeledFeature> load_feature_csv(const std::string& path, std::optional<int> expected_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_feature_csv(buf.str(), expected_dim);
}

void write_feature_csv(const std::string& path, std::span<const LabeledFeature> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    char buf[40];
    for (const auto& r : rows) {
        out << r.label;
        for (Eigen::Index j = 0; j < r.feature.size(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.17g", r.feature[j]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace gwrcil::extractor
