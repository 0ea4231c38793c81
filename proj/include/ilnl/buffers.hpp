#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ilnl/errors.hpp"

namespace ilnl {

/// Per-category FIFO loss queues of fixed length h, initialized to +inf so the
/// earliest thresholds admit everything. In pooled mode (the w/o category
/// sampling ablation) a single shared queue backs every class.
class CategoryBuffers {
public:
    CategoryBuffers(std::size_t k, std::size_t h, bool pooled = false)
        : k_(k), h_(h), pooled_(pooled) {
        if (k < 1 || h < 1) throw config_error("CategoryBuffers: k and h must be positive");
        const std::size_t queues = pooled ? 1 : k;
        values_.assign(queues, std::vector<double>(h, std::numeric_limits<double>::infinity()));
        head_.assign(queues, 0);
    }

    std::size_t k() const { return k_; }
    std::size_t h() const { return h_; }
    bool pooled() const { return pooled_; }

    /// Append a loss for class c, evicting the oldest entry.
    void push(std::size_t c, double value) {
        auto& q = values_[slot(c)];
        auto& head = head_[slot(c)];
        q[head] = value;
        head = (head + 1) % h_;
    }

    /// Queue contents in push order, oldest first (length exactly h).
    std::vector<double> values(std::size_t c) const {
        const auto& q = values_[slot(c)];
        const std::size_t head = head_[slot(c)];
        std::vector<double> out(h_);
        for (std::size_t i = 0; i < h_; ++i) out[i] = q[(head + i) % h_];
        return out;
    }

private:
    std::size_t slot(std::size_t c) const {
        if (!pooled_ && c >= k_) throw config_error("CategoryBuffers: class index out of range");
        return pooled_ ? 0 : c;
    }

    std::size_t k_;
    std::size_t h_;
    bool pooled_;
    std::vector<std::vector<double>> values_;
    std::vector<std::size_t> head_;
};

/// Loss threshold admitting the keep-ratio R share of class c's recent losses:
/// the value at ascending rank max(1, floor(R*h)) among the h buffered entries
/// (+inf initializers participate, so fresh buffers admit everything).
inline double selection_threshold(const CategoryBuffers& buffers, std::size_t c, double R) {
    if (!(R > 0.0) || R > 1.0) throw config_error("selection_threshold: R must be in (0, 1]");
    std::vector<double> entries = buffers.values(c);
    const std::size_t h = buffers.h();
    const std::size_t rank = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(R * static_cast<double>(h))));
    auto nth = entries.begin() + static_cast<std::ptrdiff_t>(std::min(rank, h) - 1);
    std::nth_element(entries.begin(), nth, entries.end());
    return *nth;
}

/// Mini-batch gate: a sample with the given loss and noisy label c is adopted
/// for training iff its loss does not exceed the class threshold. R = 1 keeps
/// everything: the full-keep quantile of the loss distribution is unbounded,
/// which the finite window statistic would otherwise underestimate.
inline bool accept_sample(double loss, const CategoryBuffers& buffers, std::size_t c, double R) {
    if (R >= 1.0) return true;
    return loss <= selection_threshold(buffers, c, R);
}

} // namespace ilnl
