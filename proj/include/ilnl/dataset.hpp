#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ilnl/errors.hpp"
#include "ilnl/matrix.hpp"

namespace ilnl {

/// A feature matrix with an optional label vector. Target splits carry their
/// ground-truth labels flagged evaluation-only: training code goes through
/// training_labels() and is refused, evaluation code uses evaluation_labels().
class DatasetSplit {
public:
    DatasetSplit() = default;

    static DatasetSplit unlabeled(Matrix features, std::size_t k = 0) {
        DatasetSplit s;
        s.features_ = std::move(features);
        s.k_ = k;
        return s;
    }

    static DatasetSplit labeled(Matrix features, std::vector<int> labels, std::size_t k,
                                bool eval_only = false) {
        DatasetSplit s;
        s.features_ = std::move(features);
        s.labels_ = std::move(labels);
        s.k_ = k;
        s.eval_only_ = eval_only;
        s.check();
        return s;
    }

    const Matrix& features() const { return features_; }
    std::size_t size() const { return features_.rows(); }
    std::size_t dim() const { return features_.cols(); }
    std::size_t k() const { return k_; }

    bool has_labels() const { return !labels_.empty(); }
    bool labels_eval_only() const { return eval_only_; }

    /// Labels for model fitting. Refused on evaluation-only splits so hidden
    /// target labels cannot leak into training.
    const std::vector<int>& training_labels() const {
        if (labels_.empty()) throw config_error("split has no labels");
        if (eval_only_)
            throw config_error("labels on this split are evaluation-only and may not be trained on");
        return labels_;
    }

    const std::vector<int>& evaluation_labels() const {
        if (labels_.empty()) throw config_error("split has no labels for evaluation");
        return labels_;
    }

    DatasetSplit head(std::size_t n) const {
        n = std::min(n, size());
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return subset(idx);
    }

    DatasetSplit subset(const std::vector<std::size_t>& idx) const {
        DatasetSplit s;
        s.features_ = features_.take_rows(idx);
        if (!labels_.empty()) {
            s.labels_.reserve(idx.size());
            for (auto i : idx) s.labels_.push_back(labels_[i]);
        }
        s.k_ = k_;
        s.eval_only_ = eval_only_;
        return s;
    }

    Matrix& mutable_features() { return features_; }

private:
    void check() const {
        if (features_.rows() == 0) throw data_error("dataset is empty");
        if (!labels_.empty()) {
            if (labels_.size() != features_.rows())
                throw data_error("label count does not match row count");
            if (k_ < 2) throw data_error("category count must be at least 2");
            for (std::size_t i = 0; i < labels_.size(); ++i)
                if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= k_)
                    throw data_error("label " + std::to_string(labels_[i]) + " at row " +
                                     std::to_string(i + 1) + " out of range for k=" +
                                     std::to_string(k_));
        }
    }

    Matrix features_;
    std::vector<int> labels_;
    std::size_t k_ = 0;
    bool eval_only_ = false;
};

/// Per-dimension affine transform (x - mean) / std fitted on one split.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> scale;

    static FeatureScaler fit(const Matrix& x) {
        FeatureScaler s;
        const std::size_t n = x.rows(), d = x.cols();
        s.mean.assign(d, 0.0);
        s.scale.assign(d, 1.0);
        if (n == 0) return s;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
        for (std::size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
        std::vector<double> var(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = x(i, j) - s.mean[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(n));
            s.scale[j] = sd > 1e-12 ? sd : 1.0;  // constant dims pass through
        }
        return s;
    }

    void apply(Matrix& x) const {
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j)
                x(i, j) = (x(i, j) - mean[j]) / scale[j];
    }
};

/// Standardize both splits with statistics computed on the source only; the
/// target never contributes to the fitted transform.
inline void normalize_with_source_stats(DatasetSplit& source, DatasetSplit& target) {
    const FeatureScaler scaler = FeatureScaler::fit(source.features());
    scaler.apply(source.mutable_features());
    scaler.apply(target.mutable_features());
}

} // namespace ilnl
