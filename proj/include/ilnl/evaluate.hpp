#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ilnl/blackbox.hpp"
#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/matrix.hpp"
#include "ilnl/model.hpp"

namespace ilnl {

/// Accuracy plus the K x K label transition matrix: entry (r, c) is the
/// probability that a sample of true class r is assigned label c. Classes
/// with no samples in the split have zero support and a NaN per-class
/// accuracy; their matrix rows are reported absent.
struct EvalReport {
    double overall = 0.0;
    std::vector<double> per_class;       // diagonal of the transition matrix
    std::vector<std::size_t> support;    // true-class sample counts
    Matrix transition;

    bool class_absent(std::size_t r) const { return support[r] == 0; }
};

inline EvalReport evaluate_predictions(const std::vector<int>& predicted,
                                       const DatasetSplit& split) {
    const std::vector<int>& truth = split.evaluation_labels();
    if (predicted.size() != truth.size())
        throw data_error("evaluate: prediction count does not match split size");
    const std::size_t k = split.k();

    EvalReport report;
    report.transition = Matrix(k, k);
    report.support.assign(k, 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto r = static_cast<std::size_t>(truth[i]);
        const auto c = static_cast<std::size_t>(predicted[i]);
        if (c >= k) throw data_error("evaluate: predicted label out of range");
        ++report.support[r];
        report.transition(r, c) += 1.0;
        if (r == c) ++hits;
    }
    report.overall = static_cast<double>(hits) / static_cast<double>(truth.size());
    report.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < k; ++r) {
        if (report.support[r] == 0) continue;
        for (std::size_t c = 0; c < k; ++c)
            report.transition(r, c) /= static_cast<double>(report.support[r]);
        report.per_class[r] = report.transition(r, r);
    }
    return report;
}

inline EvalReport evaluate(const ClassifierModel& model, const DatasetSplit& split) {
    return evaluate_predictions(model.predict(split.features()), split);
}

inline EvalReport evaluate(const BlackBoxHandle& handle, const DatasetSplit& split) {
    return evaluate_predictions(ClassifierModel::argmax_rows(handle.predict_batch(split.features())),
                                split);
}

} // namespace ilnl
