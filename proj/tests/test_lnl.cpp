#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numeric>

#include "ilnl/blackbox.hpp"
#include "ilnl/lnl.hpp"
#include "ilnl/synthetic.hpp"

using namespace ilnl;

namespace {

// labeling with prescribed per-sample max confidences (labels all 0)
NoisyLabeling labeling_with_conf(const std::vector<double>& conf, std::size_t k = 2) {
    NoisyLabeling l;
    l.k = k;
    l.probs = Matrix(conf.size(), k);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        l.probs(i, 0) = conf[i];
        const double rest = (1.0 - conf[i]) / static_cast<double>(k - 1);
        for (std::size_t j = 1; j < k; ++j) l.probs(i, j) = rest;
    }
    l.labels = ClassifierModel::argmax_rows(l.probs);
    l.max_conf = conf;
    return l;
}

} // namespace

TEST_CASE("rescale closed-form points", "[lnl][rescale]") {
    REQUIRE(rescale(0.32, 2.0) == Catch::Approx(0.4).margin(1e-15));
    REQUIRE(rescale(0.0, 2.0) == 0.0);
    REQUIRE(rescale(1.0, 2.0) == 1.0);
    REQUIRE(rescale(0.5, 2.0) == 0.5);
    REQUIRE(rescale(0.5, 0.7) == 0.5);
}

TEST_CASE("rescale is the identity at kappa=1", "[lnl][rescale]") {
    for (int i = 0; i <= 1000; ++i) {
        const double x = i / 1000.0;
        REQUIRE(std::abs(rescale(x, 1.0) - x) <= 1e-12);
    }
}

TEST_CASE("rescale is monotone and symmetric", "[lnl][rescale]") {
    for (double kappa : {0.5, 1.0, 2.0, 4.0}) {
        double prev = -1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double x = i / 1000.0;
            const double y = rescale(x, kappa);
            REQUIRE(y >= prev - 1e-12);
            REQUIRE(std::abs(rescale(1.0 - x, kappa) - (1.0 - y)) <= 1e-12);
            prev = y;
        }
    }
}

TEST_CASE("keep ratio schedule", "[lnl][schedule]") {
    REQUIRE(keep_ratio(0.0, 100.0, 0.4) == 1.0);
    REQUIRE(keep_ratio(100.0, 100.0, 0.3) == Catch::Approx(0.7).margin(1e-15));
    REQUIRE(keep_ratio(250.0, 100.0, 0.3) == Catch::Approx(0.7).margin(1e-15));
    REQUIRE(keep_ratio(50.0, 100.0, 0.5) == Catch::Approx(0.75).margin(1e-15));

    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const double n_k = 1.0 + rng.uniform01() * 500.0;
        const double eps = rng.uniform01();
        double prev = keep_ratio(0.0, n_k, eps);
        REQUIRE(prev == 1.0);
        for (double n = 1.0; n < 2.0 * n_k; n += n_k / 17.0) {
            const double r = keep_ratio(n, n_k, eps);
            REQUIRE(r <= prev);
            prev = r;
        }
        REQUIRE(keep_ratio(n_k, n_k, eps) == 1.0 - eps);
    }
}

TEST_CASE("high confidence proportion counts strict exceedances", "[lnl]") {
    REQUIRE(high_conf_proportion(labeling_with_conf({0.95, 0.85, 0.91, 0.89}), 0.9) == 0.5);
    REQUIRE(high_conf_proportion(labeling_with_conf({1.0, 1.0, 1.0}), 0.9) == 1.0);
    REQUIRE(high_conf_proportion(labeling_with_conf({0.5, 0.5}, 2), 0.9) == 0.0);
    REQUIRE(high_conf_proportion(labeling_with_conf({0.9, 0.9}), 0.9) == 0.0);  // not strict
}

TEST_CASE("noise rate estimation variants", "[lnl]") {
    LnlConfig config;
    config.gamma = 0.9;
    config.kappa = 2.0;

    SECTION("default rescaled estimate") {
        // rho' = 0.68 -> rho = 1 - 0.5*sqrt(0.64) = 0.6 -> eps = 0.4
        std::vector<double> conf(100, 0.95);
        for (std::size_t i = 68; i < 100; ++i) conf[i] = 0.5;
        const auto labeling = labeling_with_conf(conf);
        REQUIRE(estimate_noise_rate(labeling, config) == Catch::Approx(0.4).margin(1e-12));
    }
    SECTION("exact composition with rescale for constructed q") {
        for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            std::vector<double> conf(200, 0.5);
            for (std::size_t i = 0; i < static_cast<std::size_t>(q * 200); ++i) conf[i] = 0.99;
            const auto labeling = labeling_with_conf(conf);
            REQUIRE(estimate_noise_rate(labeling, config) == 1.0 - rescale(q, config.kappa));
        }
    }
    SECTION("perfectly confident black box gives eps 0") {
        REQUIRE(estimate_noise_rate(labeling_with_conf({1.0, 1.0, 1.0, 1.0}), config) == 0.0);
    }
    SECTION("no-rescale ablation") {
        config.no_rescale = true;
        std::vector<double> conf(10, 0.95);
        conf[0] = conf[1] = conf[2] = 0.5;  // rho' = 0.7
        REQUIRE(estimate_noise_rate(labeling_with_conf(conf), config) ==
                Catch::Approx(0.3).margin(1e-12));
    }
    SECTION("override wins") {
        config.noise_rate_override = 0.123;
        REQUIRE(estimate_noise_rate(labeling_with_conf({0.5, 0.5}), config) == 0.123);
    }
    SECTION("validation accuracy variant") {
        Matrix x(4, 2);
        config.validation = DatasetSplit::labeled(x, {0, 1, 0, 1}, 2);
        NoisyLabeling val;  // predicts class 0 everywhere: alpha = 0.5
        val.k = 2;
        val.probs = Matrix(4, 2);
        for (std::size_t i = 0; i < 4; ++i) val.probs(i, 0) = 0.8, val.probs(i, 1) = 0.2;
        val.labels = {0, 0, 0, 0};
        val.max_conf = {0.8, 0.8, 0.8, 0.8};
        REQUIRE(estimate_noise_rate(labeling_with_conf({0.5, 0.5}), config, val) == 0.5);
        REQUIRE_THROWS_AS(estimate_noise_rate(labeling_with_conf({0.5, 0.5}), config),
                          config_error);
    }
}

TEST_CASE("noisy labeling ties break to the lowest class", "[lnl]") {
    // zero-weight model emits exact ties
    ClassifierModel m({3, 2}, 0);
    for (auto& w : m.weights())
        for (auto& v : w.data()) v = 0.0;
    const auto handle = wrap_as_blackbox(m);
    const DatasetSplit target = DatasetSplit::unlabeled(Matrix(5, 3, 1.0));
    const NoisyLabeling labeling = noisy_labeling(handle, target);
    for (std::size_t i = 0; i < 5; ++i) {
        REQUIRE(labeling.labels[i] == 0);
        REQUIRE(labeling.max_conf[i] == 0.5);
    }
}

TEST_CASE("empirical noise rate is the mislabeled fraction", "[lnl]") {
    Matrix x(10, 1);
    const DatasetSplit target =
        DatasetSplit::labeled(x, {0, 0, 0, 0, 0, 0, 0, 1, 1, 1}, 2, /*eval_only=*/true);
    NoisyLabeling labeling;
    labeling.k = 2;
    labeling.labels = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};  // 3 of 10 wrong
    labeling.probs = Matrix(10, 2);
    labeling.max_conf.assign(10, 1.0);
    REQUIRE(empirical_noise_rate(labeling, target) == Catch::Approx(0.3).margin(1e-15));

    labeling.labels = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
    REQUIRE(empirical_noise_rate(labeling, target) == 0.0);

    const DatasetSplit unlabeled = DatasetSplit::unlabeled(x, 2);
    REQUIRE_THROWS_AS(empirical_noise_rate(labeling, unlabeled), config_error);
}

namespace {

struct Fixture {
    DatasetSplit source;
    DatasetSplit target;
    BlackBoxHandle handle;
};

Fixture small_fixture() {
    ShiftSpec spec;
    spec.k = 3;
    spec.d = 2;
    spec.n_source = 1500;
    spec.n_target = 1500;
    spec.translation = {0.9, -0.3};
    spec.rotation_radians = 0.5;
    spec.spread = 0.35;
    spec.seed = 8;
    auto [source, target] = make_synthetic_pair(spec);
    TrainConfig tc;
    tc.hidden_dims = {32};
    tc.total_iters = 600;
    tc.seed = 8;
    ClassifierModel source_model = train_source(source, tc);
    return Fixture{std::move(source), std::move(target),
                   wrap_as_blackbox(std::move(source_model))};
}

LnlConfig small_lnl_config() {
    LnlConfig config;
    config.hidden_dims = {32};
    config.total_iters = 600;
    config.buffer_len = 50;
    return config;
}

} // namespace

TEST_CASE("run_lnl with N=0 returns the fresh init", "[lnl][run]") {
    const Fixture f = small_fixture();
    LnlConfig config = small_lnl_config();
    config.total_iters = 0;
    const LnlResult result = run_lnl(f.handle, f.target, config, 42);
    const ClassifierModel fresh({2, 32, 3}, derive_seed(42, 1));
    REQUIRE(result.model.same_parameters(fresh));
    REQUIRE(result.metrics.iterations.empty());
}

TEST_CASE("noise override 0 degenerates to training on everything", "[lnl][run]") {
    const Fixture f = small_fixture();
    LnlConfig config = small_lnl_config();
    config.noise_rate_override = 0.0;
    const LnlResult result = run_lnl(f.handle, f.target, config, 1);
    REQUIRE(result.metrics.eps_used == 0.0);

    std::size_t accepted = 0, seen = 0, cursor = 0;
    for (const auto& row : result.metrics.iterations) {
        REQUIRE(row.keep_ratio == 1.0);
        accepted += std::accumulate(row.accepted_per_class.begin(),
                                    row.accepted_per_class.end(), std::size_t(0));
        // shuffled epochs keep the tail batch, so batch sizes vary at epoch ends
        const std::size_t take = std::min(config.batch_size, f.target.size() - cursor);
        seen += take;
        cursor = (cursor + take) % f.target.size();
    }
    REQUIRE(accepted == seen);  // R = 1 admits every sample
}

TEST_CASE("run_lnl leaves the labeling untouched and improves on it", "[lnl][run]") {
    const Fixture f = small_fixture();
    const NoisyLabeling labeling = noisy_labeling(f.handle, f.target);
    const std::uint64_t sum_before = labeling.checksum();

    const LnlResult result = run_lnl_labeled(labeling, f.target, small_lnl_config(), 3);
    REQUIRE(labeling.checksum() == sum_before);

    const double source_split_acc =
        accuracy(ClassifierModel::argmax_rows(f.handle.predict_batch(f.source.features())),
                 f.source.training_labels());
    const double label_acc = 1.0 - empirical_noise_rate(labeling, f.target);
    const double model_acc =
        accuracy(result.model.predict(f.target.features()), f.target.evaluation_labels());
    INFO("source-split acc " << source_split_acc << ", noisy label acc " << label_acc
                             << ", trained model acc " << model_acc);
    REQUIRE(label_acc < source_split_acc);  // the shift degrades the labeling
    REQUIRE(model_acc > label_acc);
}

TEST_CASE("run_lnl is deterministic", "[lnl][run]") {
    const Fixture f = small_fixture();
    LnlConfig config = small_lnl_config();
    config.total_iters = 200;
    const LnlResult a = run_lnl(f.handle, f.target, config, 11);
    const LnlResult b = run_lnl(f.handle, f.target, config, 11);
    REQUIRE(a.model.same_parameters(b.model));
    REQUIRE(a.metrics.eps_estimated == b.metrics.eps_estimated);
}

TEST_CASE("the noise rate is clamped before the keep schedule", "[lnl][run]") {
    const Fixture f = small_fixture();
    LnlConfig config = small_lnl_config();
    config.total_iters = 5;
    config.noise_rate_override = 1.0;  // would keep zero samples forever
    const LnlResult result = run_lnl(f.handle, f.target, config, 2);
    REQUIRE(result.metrics.eps_estimated == 1.0);
    REQUIRE(result.metrics.eps_used == 0.95);
}

TEST_CASE("a class absent from the labeling is warned about", "[lnl][run]") {
    // model that never predicts class 2: huge negative bias
    ClassifierModel m({2, 3}, 4);
    m.biases()[0] = {0.0, 0.0, -50.0};
    const auto handle = wrap_as_blackbox(m);
    Rng rng(9);
    Matrix x(60, 2);
    for (auto& v : x.data()) v = rng.normal();
    const DatasetSplit target = DatasetSplit::unlabeled(x, 3);

    LnlConfig config = small_lnl_config();
    config.total_iters = 30;
    const LnlResult result = run_lnl(handle, target, config, 5);
    bool warned = false;
    for (const auto& w : result.metrics.warnings)
        warned = warned || w.find("class 2") != std::string::npos;
    REQUIRE(warned);
    for (const auto& row : result.metrics.iterations) REQUIRE(row.accepted_per_class[2] == 0);
}
