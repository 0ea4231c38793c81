#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/matrix.hpp"
#include "ilnl/rng.hpp"

namespace ilnl {

inline constexpr double kProbClamp = 1e-12;  // floor before log, keeps losses finite

/// Feed-forward softmax classifier with tanh hidden units. layer_dims is
/// [d, h_1, ..., K]; weights are fan_in x fan_out row-major.
class ClassifierModel {
public:
    ClassifierModel() = default;

    ClassifierModel(std::vector<std::size_t> layer_dims, std::uint64_t init_seed)
        : dims_(std::move(layer_dims)) {
        if (dims_.size() < 2) throw config_error("model needs at least input and output dims");
        if (dims_.back() < 2) throw config_error("model needs K >= 2 outputs");
        Rng rng(init_seed);
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            const std::size_t fan_in = dims_[l], fan_out = dims_[l + 1];
            Matrix w(fan_in, fan_out);
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : w.data()) v = rng.uniform(-bound, bound);
            weights_.push_back(std::move(w));
            biases_.emplace_back(fan_out, 0.0);
        }
    }

    static ClassifierModel from_parts(std::vector<std::size_t> dims, std::vector<Matrix> weights,
                                      std::vector<std::vector<double>> biases) {
        ClassifierModel m;
        m.dims_ = std::move(dims);
        m.weights_ = std::move(weights);
        m.biases_ = std::move(biases);
        return m;
    }

    const std::vector<std::size_t>& layer_dims() const { return dims_; }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t num_classes() const { return dims_.back(); }
    std::size_t num_layers() const { return weights_.size(); }

    std::vector<Matrix>& weights() { return weights_; }
    const std::vector<Matrix>& weights() const { return weights_; }
    std::vector<std::vector<double>>& biases() { return biases_; }
    const std::vector<std::vector<double>>& biases() const { return biases_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l)
            n += weights_[l].rows() * weights_[l].cols() + biases_[l].size();
        return n;
    }

    bool same_parameters(const ClassifierModel& o) const {
        return dims_ == o.dims_ && weights_ == o.weights_ && biases_ == o.biases_;
    }

    /// Softmax probabilities for a batch; each output row sums to 1.
    Matrix forward(const Matrix& batch) const {
        std::vector<Matrix> activations;
        return forward_impl(batch, activations, /*keep=*/false);
    }

    // Forward pass that records post-activation values per layer for backprop.
    Matrix forward_cached(const Matrix& batch, std::vector<Matrix>& activations) const {
        return forward_impl(batch, activations, /*keep=*/true);
    }

    std::vector<int> predict(const Matrix& batch) const { return argmax_rows(forward(batch)); }

    /// Argmax per row, ties broken toward the lowest class index.
    static std::vector<int> argmax_rows(const Matrix& probs) {
        std::vector<int> out(probs.rows());
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < probs.cols(); ++j)
                if (probs(i, j) > probs(i, best)) best = j;
            out[i] = static_cast<int>(best);
        }
        return out;
    }

private:
    Matrix forward_impl(const Matrix& batch, std::vector<Matrix>& activations, bool keep) const {
        if (batch.cols() != input_dim())
            throw data_error("forward: batch has " + std::to_string(batch.cols()) +
                             " columns, model expects " + std::to_string(input_dim()));
        Matrix a = batch;
        if (keep) activations.push_back(a);
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Matrix z(a.rows(), weights_[l].cols());
            for (std::size_t i = 0; i < z.rows(); ++i)
                for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) = biases_[l][j];
            matmul_add(a, weights_[l], z);
            if (l + 1 < weights_.size()) {
                for (auto& v : z.data()) v = std::tanh(v);
                a = std::move(z);
                if (keep) activations.push_back(a);
            } else {
                softmax_rows(z);
                if (keep) activations.push_back(z);
                return z;
            }
        }
        // no layers cannot happen (ctor enforces >= 1)
        return a;
    }

    static void softmax_rows(Matrix& z) {
        for (std::size_t i = 0; i < z.rows(); ++i) {
            double* row = z.row_ptr(i);
            double mx = row[0];
            for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < z.cols(); ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (std::size_t j = 0; j < z.cols(); ++j) row[j] /= sum;
        }
    }

    std::vector<std::size_t> dims_;
    std::vector<Matrix> weights_;
    std::vector<std::vector<double>> biases_;
};

inline double cross_entropy_loss(const double* probs, std::size_t k, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= k)
        throw data_error("cross_entropy_loss: label out of range");
    return -std::log(std::max(probs[label], kProbClamp));
}

inline std::vector<double> per_sample_losses(const Matrix& probs, const std::vector<int>& labels) {
    std::vector<double> losses(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i)
        losses[i] = cross_entropy_loss(probs.row_ptr(i), probs.cols(), labels[i]);
    return losses;
}

/// Learning-rate decay eta_n = eta0 / (1 + 10*zeta)^0.75 with zeta = n/N.
struct SgdSchedule {
    double eta0 = 0.01;
    std::size_t total_iters = 0;  // N
    double momentum = 0.9;

    double rate(std::size_t n) const {
        const double zeta =
            total_iters == 0
                ? 0.0
                : std::min(1.0, static_cast<double>(n) / static_cast<double>(total_iters));
        return eta0 / std::pow(1.0 + 10.0 * zeta, 0.75);
    }
};

/// Momentum SGD over a model. step() always computes losses for the whole
/// batch; the 0/1 mask only gates which samples contribute gradient, averaged
/// over the number of selected samples. An all-zero mask leaves the model and
/// the velocity state untouched.
class SgdOptimizer {
public:
    SgdOptimizer(const ClassifierModel& model, SgdSchedule schedule)
        : schedule_(schedule) {
        for (std::size_t l = 0; l < model.num_layers(); ++l) {
            w_vel_.emplace_back(model.weights()[l].rows(), model.weights()[l].cols());
            b_vel_.emplace_back(model.biases()[l].size(), 0.0);
        }
    }

    const SgdSchedule& schedule() const { return schedule_; }

    std::vector<double> step(ClassifierModel& model, const Matrix& batch,
                             const std::vector<int>& labels,
                             const std::vector<std::uint8_t>& mask, std::size_t n) {
        if (labels.size() != batch.rows() || mask.size() != batch.rows())
            throw data_error("sgd step: labels/mask size must match batch rows");

        std::vector<Matrix> acts;
        const Matrix probs = model.forward_cached(batch, acts);
        std::vector<double> losses = per_sample_losses(probs, labels);

        std::size_t selected = 0;
        for (auto m : mask) selected += m ? 1 : 0;
        if (selected == 0) return losses;

        const std::size_t L = model.num_layers();
        const double inv = 1.0 / static_cast<double>(selected);
        const std::size_t k = model.num_classes();

        // delta at the softmax layer: (p - onehot) / selected for chosen rows
        Matrix delta(batch.rows(), k);
        for (std::size_t i = 0; i < batch.rows(); ++i) {
            if (!mask[i]) continue;
            for (std::size_t j = 0; j < k; ++j)
                delta(i, j) = (probs(i, j) - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) * inv;
        }

        const double eta = schedule_.rate(n);
        for (std::size_t l = L; l-- > 0;) {
            Matrix grad_w(model.weights()[l].rows(), model.weights()[l].cols());
            matmul_at_b_add(acts[l], delta, grad_w);
            std::vector<double> grad_b(model.biases()[l].size(), 0.0);
            for (std::size_t i = 0; i < delta.rows(); ++i)
                for (std::size_t j = 0; j < delta.cols(); ++j) grad_b[j] += delta(i, j);

            if (l > 0) {
                Matrix next(delta.rows(), model.weights()[l].rows());
                matmul_a_bt_add(delta, model.weights()[l], next);
                const Matrix& a = acts[l];  // tanh output of layer l
                for (std::size_t i = 0; i < next.rows(); ++i)
                    for (std::size_t j = 0; j < next.cols(); ++j)
                        next(i, j) *= 1.0 - a(i, j) * a(i, j);
                delta = std::move(next);
            }

            auto& wv = w_vel_[l].data();
            const auto& gw = grad_w.data();
            auto& w = model.weights()[l].data();
            for (std::size_t t = 0; t < w.size(); ++t) {
                wv[t] = schedule_.momentum * wv[t] + gw[t];
                w[t] -= eta * wv[t];
            }
            auto& bv = b_vel_[l];
            auto& b = model.biases()[l];
            for (std::size_t t = 0; t < b.size(); ++t) {
                bv[t] = schedule_.momentum * bv[t] + grad_b[t];
                b[t] -= eta * bv[t];
            }
        }
        return losses;
    }

private:
    SgdSchedule schedule_;
    std::vector<Matrix> w_vel_;
    std::vector<std::vector<double>> b_vel_;
};

/// Compare analytic gradients against central finite differences (step 1e-5)
/// on the mean batch loss; returns the max relative error. Meant for small
/// models only.
inline double grad_check(ClassifierModel model, const Matrix& batch,
                         const std::vector<int>& labels) {
    const std::size_t n = batch.rows();
    std::vector<std::uint8_t> mask(n, 1);

    // analytic gradient via one optimizer step with momentum 0 and a known rate
    ClassifierModel probe = model;
    SgdOptimizer opt(probe, SgdSchedule{1.0, 0, 0.0});
    opt.step(probe, batch, labels, mask, 0);

    auto mean_loss = [&](const ClassifierModel& m) {
        const Matrix probs = m.forward(batch);
        const auto losses = per_sample_losses(probs, labels);
        double sum = 0.0;
        for (double v : losses) sum += v;
        return sum / static_cast<double>(n);
    };

    const double h = 1e-5;
    double max_rel = 0.0;
    auto check_param = [&](double& value, double analytic) {
        const double saved = value;
        value = saved + h;
        const double up = mean_loss(model);
        value = saved - h;
        const double down = mean_loss(model);
        value = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-4);
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    };

    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto& w = model.weights()[l].data();
        const auto& w_after = probe.weights()[l].data();
        for (std::size_t t = 0; t < w.size(); ++t)
            check_param(w[t], w[t] - w_after[t]);  // rate 1, momentum 0: grad = old - new
        auto& b = model.biases()[l];
        const auto& b_after = probe.biases()[l];
        for (std::size_t t = 0; t < b.size(); ++t) check_param(b[t], b[t] - b_after[t]);
    }
    return max_rel;
}

struct TrainConfig {
    std::vector<std::size_t> hidden_dims = {256, 128};
    std::size_t total_iters = 2000;
    std::size_t batch_size = 64;
    double eta0 = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

namespace detail {

// Shuffled-epoch batch cursor: deterministic permutation per epoch, batches
// taken in order, tail batch kept.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
        : n_(n), batch_(std::min(batch_size, n)), rng_(seed) {
        order_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> next() {
        if (pos_ >= n_) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        const std::size_t take = std::min(batch_, n_ - pos_);
        std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
        pos_ += take;
        return idx;
    }

private:
    std::size_t n_;
    std::size_t batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

inline std::vector<std::size_t> full_dims(std::size_t d, const std::vector<std::size_t>& hidden,
                                          std::size_t k) {
    std::vector<std::size_t> dims;
    dims.push_back(d);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(k);
    return dims;
}

} // namespace detail

/// Supervised training on a labeled split (plain cross entropy, all samples).
inline ClassifierModel train_source(const DatasetSplit& source, const TrainConfig& config) {
    const std::vector<int>& labels = source.training_labels();
    ClassifierModel model(detail::full_dims(source.dim(), config.hidden_dims, source.k()),
                          derive_seed(config.seed, 1));
    SgdOptimizer opt(model, SgdSchedule{config.eta0, config.total_iters, config.momentum});
    detail::BatchSampler sampler(source.size(), config.batch_size, derive_seed(config.seed, 2));
    for (std::size_t n = 0; n < config.total_iters; ++n) {
        const auto idx = sampler.next();
        const Matrix batch = source.features().take_rows(idx);
        std::vector<int> batch_labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = labels[idx[i]];
        std::vector<std::uint8_t> mask(idx.size(), 1);
        opt.step(model, batch, batch_labels, mask, n);
    }
    return model;
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw data_error("accuracy: size mismatch or empty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

} // namespace ilnl
