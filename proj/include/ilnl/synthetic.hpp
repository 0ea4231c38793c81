#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/rng.hpp"

namespace ilnl {

/// Recipe for a synthetic source/target domain pair: Gaussian clusters whose
/// means are rigidly moved (rotation in the first two dimensions plus a
/// translation) to produce the target domain. Clusters farther from the
/// rotation center travel farther, so the induced label noise is unbalanced
/// across categories.
struct ShiftSpec {
    std::size_t k = 2;
    std::size_t d = 2;
    std::size_t n_source = 1000;
    std::size_t n_target = 1000;
    std::vector<double> translation;   // padded with zeros to d
    double rotation_radians = 0.0;     // applied in planes (0,1), (2,3), ...
    std::size_t rotation_planes = 1;   // how many consecutive 2-d planes rotate
    double spread = 0.3;               // per-cluster stddev
    double cluster_radius = 2.0;       // norm of each cluster mean
    std::uint64_t seed = 0;

    void validate() const {
        if (k < 2) throw config_error("ShiftSpec: k must be >= 2");
        if (d < 1) throw config_error("ShiftSpec: d must be >= 1");
        if (rotation_radians != 0.0 && d < 2 * rotation_planes)
            throw config_error("ShiftSpec: rotating " + std::to_string(rotation_planes) +
                               " planes needs d >= " + std::to_string(2 * rotation_planes));
        if (n_source == 0 || n_target == 0)
            throw config_error("ShiftSpec: sample counts must be positive");
        if (translation.size() > d)
            throw config_error("ShiftSpec: translation has more than d components");
        if (spread <= 0.0) throw config_error("ShiftSpec: spread must be positive");
    }
};

namespace detail {

inline std::vector<std::vector<double>> cluster_means(const ShiftSpec& spec, Rng& rng) {
    std::vector<std::vector<double>> means(spec.k, std::vector<double>(spec.d, 0.0));
    for (std::size_t c = 0; c < spec.k; ++c) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < spec.d; ++j) {
            means[c][j] = rng.normal();
            norm2 += means[c][j] * means[c][j];
        }
        const double norm = std::sqrt(norm2);
        const double target_norm = spec.cluster_radius;
        if (norm > 1e-12)
            for (std::size_t j = 0; j < spec.d; ++j) means[c][j] *= target_norm / norm;
    }
    return means;
}

inline std::vector<double> shifted_mean(const ShiftSpec& spec, const std::vector<double>& m) {
    std::vector<double> out = m;
    if (spec.rotation_radians != 0.0) {
        const double c = std::cos(spec.rotation_radians);
        const double s = std::sin(spec.rotation_radians);
        for (std::size_t p = 0; p < spec.rotation_planes && 2 * p + 1 < spec.d; ++p) {
            const double x = out[2 * p], y = out[2 * p + 1];
            out[2 * p] = c * x - s * y;
            out[2 * p + 1] = s * x + c * y;
        }
    }
    for (std::size_t j = 0; j < spec.translation.size(); ++j) out[j] += spec.translation[j];
    return out;
}

// Uniform class priors: counts differ by at most one across classes.
inline std::vector<int> balanced_labels(std::size_t n, std::size_t k) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
    return labels;
}

inline Matrix sample_clusters(const std::vector<std::vector<double>>& means,
                              const std::vector<int>& labels, double spread, std::size_t d,
                              Rng& rng) {
    Matrix x(labels.size(), d);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& m = means[static_cast<std::size_t>(labels[i])];
        for (std::size_t j = 0; j < d; ++j) x(i, j) = m[j] + spread * rng.normal();
    }
    return x;
}

} // namespace detail

/// Deterministic generator: the same spec yields bit-identical splits. Both
/// splits are standardized with statistics fitted on the source alone; the
/// target's true labels are attached evaluation-only.
inline std::pair<DatasetSplit, DatasetSplit> make_synthetic_pair(const ShiftSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0x5954484e5953ULL));

    const auto source_means = detail::cluster_means(spec, rng);
    std::vector<std::vector<double>> target_means(spec.k);
    for (std::size_t c = 0; c < spec.k; ++c)
        target_means[c] = detail::shifted_mean(spec, source_means[c]);

    auto src_labels = detail::balanced_labels(spec.n_source, spec.k);
    auto tgt_labels = detail::balanced_labels(spec.n_target, spec.k);
    Matrix src_x = detail::sample_clusters(source_means, src_labels, spec.spread, spec.d, rng);
    Matrix tgt_x = detail::sample_clusters(target_means, tgt_labels, spec.spread, spec.d, rng);

    DatasetSplit source = DatasetSplit::labeled(std::move(src_x), std::move(src_labels), spec.k);
    DatasetSplit target =
        DatasetSplit::labeled(std::move(tgt_x), std::move(tgt_labels), spec.k, /*eval_only=*/true);
    normalize_with_source_stats(source, target);
    return {std::move(source), std::move(target)};
}

} // namespace ilnl
