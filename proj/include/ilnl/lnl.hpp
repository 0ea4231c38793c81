#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ilnl/blackbox.hpp"
#include "ilnl/buffers.hpp"
#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/model.hpp"
#include "ilnl/rng.hpp"

namespace ilnl {

/// Black-box predictions over a target split plus the derived pseudo labels
/// (argmax, ties to the lowest index) and per-sample max probabilities.
struct NoisyLabeling {
    Matrix probs;
    std::vector<int> labels;
    std::vector<double> max_conf;
    std::size_t k = 0;

    std::size_t size() const { return labels.size(); }

    std::uint64_t checksum() const {
        std::uint64_t hash = 1469598103934665603ULL;  // FNV-1a over the raw bytes
        auto mix = [&hash](const void* data, std::size_t len) {
            const auto* p = static_cast<const unsigned char*>(data);
            for (std::size_t i = 0; i < len; ++i) {
                hash ^= p[i];
                hash *= 1099511628211ULL;
            }
        };
        mix(probs.data().data(), probs.data().size() * sizeof(double));
        mix(labels.data(), labels.size() * sizeof(int));
        mix(max_conf.data(), max_conf.size() * sizeof(double));
        return hash;
    }
};

inline NoisyLabeling noisy_labeling(const BlackBoxHandle& handle, const DatasetSplit& target) {
    NoisyLabeling out;
    out.probs = handle.predict_batch(target.features());
    out.k = handle.k();
    out.labels = ClassifierModel::argmax_rows(out.probs);
    out.max_conf.resize(out.probs.rows());
    for (std::size_t i = 0; i < out.probs.rows(); ++i) {
        double mx = out.probs(i, 0);
        for (std::size_t j = 1; j < out.probs.cols(); ++j) mx = std::max(mx, out.probs(i, j));
        out.max_conf[i] = mx;
    }
    return out;
}

/// Ground-truth noise fraction of a labeling; evaluation only.
inline double empirical_noise_rate(const NoisyLabeling& labeling, const DatasetSplit& target) {
    return 1.0 - accuracy(labeling.labels, target.evaluation_labels());
}

/// Share of samples whose max predicted probability strictly exceeds gamma.
inline double high_conf_proportion(const NoisyLabeling& labeling, double gamma) {
    if (!(gamma > 0.0) || !(gamma < 1.0))
        throw config_error("high_conf_proportion: gamma must be in (0,1)");
    if (labeling.size() == 0) throw config_error("high_conf_proportion: empty labeling");
    std::size_t count = 0;
    for (double c : labeling.max_conf)
        if (c > gamma) ++count;
    return static_cast<double>(count) / static_cast<double>(labeling.size());
}

/// Symmetric confidence-spread correction with fixed points {0, 0.5, 1};
/// identity at kappa = 1.
inline double rescale(double rho_prime, double kappa) {
    if (rho_prime < 0.5) return 0.5 * std::pow(2.0 * rho_prime, 1.0 / kappa);
    return 1.0 - 0.5 * std::pow(2.0 - 2.0 * rho_prime, 1.0 / kappa);
}

/// Keep ratio R(n) = 1 - min((n/n_k) * eps, eps): decays linearly from 1 and
/// floors at 1 - eps once n reaches n_k.
inline double keep_ratio(double n, double n_k, double eps) {
    return 1.0 - std::min(n / n_k * eps, eps);
}

struct LnlConfig {
    double gamma = 0.9;
    double kappa = 2.0;
    std::size_t buffer_len = 100;   // h
    double nk_fraction = 0.5;       // n_k as a fraction of total_iters
    std::size_t total_iters = 2000; // N
    std::size_t batch_size = 64;
    std::vector<std::size_t> hidden_dims = {256, 128};
    double eta0 = 0.01;
    double momentum = 0.9;
    double max_noise_rate = 0.95;   // clamp applied before the keep schedule

    // ablation switches
    bool no_rescale = false;
    bool pooled_buffers = false;                 // w/o CateS
    std::optional<double> noise_rate_override;
    std::optional<DatasetSplit> validation;      // with Val: labeled target samples

    void validate() const {
        if (!(gamma > 0.0) || !(gamma < 1.0)) throw config_error("gamma must be in (0,1)");
        if (!(kappa > 0.0)) throw config_error("kappa must be positive");
        if (buffer_len < 1) throw config_error("buffer length must be >= 1");
        if (!(nk_fraction > 0.0) || nk_fraction > 1.0)
            throw config_error("nk_fraction must be in (0,1]");
        if (batch_size < 1) throw config_error("batch size must be >= 1");
        if (!(momentum >= 0.0) || momentum >= 1.0) throw config_error("momentum must be in [0,1)");
        if (noise_rate_override &&
            (*noise_rate_override < 0.0 || *noise_rate_override > 1.0))
            throw config_error("noise rate override must be in [0,1]");
        if (validation && !validation->has_labels())
            throw config_error("validation split must be labeled");
    }
};

/// Estimated noise rate per the configured strategy: confidence statistics
/// with rescale by default, 1 - rho' without rescale, 1 - alpha from labeled
/// validation accuracy, or the explicit override.
inline double estimate_noise_rate(const NoisyLabeling& labeling, const LnlConfig& config,
                                  const std::optional<NoisyLabeling>& val_labeling = {}) {
    if (config.noise_rate_override) return *config.noise_rate_override;
    if (config.validation) {
        if (!val_labeling)
            throw config_error("validation variant requires black-box predictions on the "
                               "validation split");
        const double alpha =
            accuracy(val_labeling->labels, config.validation->evaluation_labels());
        return 1.0 - alpha;
    }
    const double rho_prime = high_conf_proportion(labeling, config.gamma);
    if (config.no_rescale) return 1.0 - rho_prime;
    return 1.0 - rescale(rho_prime, config.kappa);
}

struct LnlIterationRow {
    std::size_t iteration;
    double keep_ratio;
    double mean_accepted_loss;              // NaN when nothing was accepted
    std::vector<std::size_t> accepted_per_class;
};

struct LnlRunMetrics {
    double eps_estimated = 0.0;
    double eps_used = 0.0;                  // after the [0, max_noise_rate] clamp
    double rho_prime = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
    std::vector<LnlIterationRow> iterations;
};

struct LnlResult {
    ClassifierModel model;
    LnlRunMetrics metrics;
};

/// One LNL round against a fixed labeling: estimate the noise rate, train a
/// freshly initialized model for N iterations, gating each mini-batch sample
/// through its class buffer threshold at the current keep ratio. All batch
/// losses (selected or not, computed before the update) feed the buffers.
/// Passing init_model warm-starts from it instead of a random init.
inline LnlResult run_lnl_labeled(const NoisyLabeling& labeling, const DatasetSplit& target,
                                 const LnlConfig& config, std::uint64_t seed,
                                 const std::optional<NoisyLabeling>& val_labeling = {},
                                 const std::optional<ClassifierModel>& init_model = {}) {
    config.validate();
    if (labeling.size() != target.size())
        throw data_error("labeling size does not match target size");

    LnlResult result;
    result.metrics.eps_estimated = estimate_noise_rate(labeling, config, val_labeling);
    if (!config.noise_rate_override && !config.validation)
        result.metrics.rho_prime = high_conf_proportion(labeling, config.gamma);
    const double eps =
        std::clamp(result.metrics.eps_estimated, 0.0, config.max_noise_rate);
    result.metrics.eps_used = eps;

    const std::size_t k = labeling.k;
    std::vector<std::size_t> label_support(k, 0);
    for (int lab : labeling.labels) ++label_support[static_cast<std::size_t>(lab)];
    for (std::size_t c = 0; c < k; ++c)
        if (label_support[c] == 0)
            result.metrics.warnings.push_back("class " + std::to_string(c) +
                                              " absent from noisy labels");

    ClassifierModel model =
        init_model ? *init_model
                   : ClassifierModel(detail::full_dims(target.dim(), config.hidden_dims, k),
                                     derive_seed(seed, 1));
    if (init_model && (model.input_dim() != target.dim() || model.num_classes() != k))
        throw config_error("warm-start model does not match target dimensions");
    if (config.total_iters == 0) {
        result.model = std::move(model);
        return result;
    }

    SgdOptimizer opt(model, SgdSchedule{config.eta0, config.total_iters, config.momentum});
    detail::BatchSampler sampler(target.size(), config.batch_size, derive_seed(seed, 2));
    CategoryBuffers buffers(k, config.buffer_len, config.pooled_buffers);
    const double n_k = std::max(1.0, config.nk_fraction * static_cast<double>(config.total_iters));
    result.metrics.iterations.reserve(config.total_iters);

    for (std::size_t n = 0; n < config.total_iters; ++n) {
        const auto idx = sampler.next();
        const Matrix batch = target.features().take_rows(idx);
        std::vector<int> batch_labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = labeling.labels[idx[i]];

        const double R = keep_ratio(static_cast<double>(n), n_k, eps);
        const Matrix probs = model.forward(batch);
        const std::vector<double> losses = per_sample_losses(probs, batch_labels);

        LnlIterationRow row;
        row.iteration = n;
        row.keep_ratio = R;
        row.accepted_per_class.assign(k, 0);
        std::vector<std::uint8_t> mask(idx.size(), 0);
        double accepted_loss_sum = 0.0;
        std::size_t accepted = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto c = static_cast<std::size_t>(batch_labels[i]);
            if (accept_sample(losses[i], buffers, c, R)) {
                mask[i] = 1;
                ++row.accepted_per_class[c];
                accepted_loss_sum += losses[i];
                ++accepted;
            }
        }
        row.mean_accepted_loss = accepted > 0
                                     ? accepted_loss_sum / static_cast<double>(accepted)
                                     : std::numeric_limits<double>::quiet_NaN();

        opt.step(model, batch, batch_labels, mask, n);
        for (std::size_t i = 0; i < idx.size(); ++i)
            buffers.push(static_cast<std::size_t>(batch_labels[i]), losses[i]);
        result.metrics.iterations.push_back(std::move(row));
    }

    result.model = std::move(model);
    return result;
}

/// Acquire noisy labels from the black box once, then run the LNL round.
inline LnlResult run_lnl(const BlackBoxHandle& handle, const DatasetSplit& target,
                         const LnlConfig& config, std::uint64_t seed) {
    const NoisyLabeling labeling = noisy_labeling(handle, target);
    std::optional<NoisyLabeling> val_labeling;
    if (config.validation) val_labeling = noisy_labeling(handle, *config.validation);
    return run_lnl_labeled(labeling, target, config, seed, val_labeling);
}

} // namespace ilnl
