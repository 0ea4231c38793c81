#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ilnl/checkpoint.hpp"
#include "ilnl/model.hpp"
#include "ilnl/rng.hpp"
#include "ilnl/synthetic.hpp"

using namespace ilnl;
namespace fs = std::filesystem;

namespace {

Matrix random_batch(std::size_t n, std::size_t d, Rng& rng) {
    Matrix x(n, d);
    for (auto& v : x.data()) v = rng.normal();
    return x;
}

std::vector<int> random_labels(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(k));
    return labels;
}

ClassifierModel zeroed_model(std::vector<std::size_t> dims) {
    ClassifierModel m(dims, 0);
    for (auto& w : m.weights())
        for (auto& v : w.data()) v = 0.0;
    for (auto& b : m.biases())
        for (auto& v : b) v = 0.0;
    return m;
}

} // namespace

TEST_CASE("zero-weight model predicts the uniform distribution", "[model]") {
    const auto m = zeroed_model({4, 8, 3});
    Rng rng(1);
    const Matrix probs = m.forward(random_batch(5, 4, rng));
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t j = 0; j < probs.cols(); ++j)
            REQUIRE(probs(i, j) == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("forward rows are probability vectors", "[model]") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        ClassifierModel m({6, 10, 4}, rng.next_u64());
        const Matrix probs = m.forward(random_batch(8, 6, rng));
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < probs.cols(); ++j) {
                REQUIRE(probs(i, j) >= 0.0);
                sum += probs(i, j);
            }
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("identical input rows give identical output rows", "[model]") {
    Rng rng(3);
    ClassifierModel m({5, 12, 3}, 77);
    Matrix batch(2, 5);
    for (std::size_t j = 0; j < 5; ++j) batch(0, j) = batch(1, j) = rng.normal();
    const Matrix probs = m.forward(batch);
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(probs(0, j) == probs(1, j));
}

TEST_CASE("forward rejects dimension mismatch", "[model]") {
    ClassifierModel m({5, 3}, 0);
    REQUIRE_THROWS_AS(m.forward(Matrix(2, 4)), data_error);
}

TEST_CASE("cross entropy values", "[model]") {
    const double one[] = {0.0, 1.0, 0.0};
    REQUIRE(cross_entropy_loss(one, 3, 1) == 0.0);
    const double e_inv[] = {1.0 - std::exp(-1.0), std::exp(-1.0)};
    REQUIRE(cross_entropy_loss(e_inv, 2, 1) == Catch::Approx(1.0).margin(1e-12));
    const double zero[] = {1.0, 0.0};
    // clamp at 1e-12 keeps confidently-wrong losses finite
    REQUIRE(cross_entropy_loss(zero, 2, 1) ==
            Catch::Approx(27.631021115928547).margin(1e-9));
}

TEST_CASE("learning-rate schedule", "[model]") {
    SgdSchedule s{0.01, 1000, 0.9};
    REQUIRE(s.rate(0) == 0.01);
    REQUIRE(s.rate(1000) == Catch::Approx(0.0016556002607617019).margin(1e-15));
    double prev = s.rate(0);
    for (std::size_t n = 1; n <= 1000; n += 7) {
        const double r = s.rate(n);
        REQUIRE(r <= prev);
        prev = r;
    }
}

TEST_CASE("all-zero mask computes losses but leaves the model unchanged", "[model]") {
    Rng rng(4);
    ClassifierModel m({3, 6, 2}, 9);
    const ClassifierModel before = m;
    SgdOptimizer opt(m, SgdSchedule{0.1, 100, 0.9});
    const Matrix batch = random_batch(4, 3, rng);
    const auto labels = random_labels(4, 2, rng);
    const auto losses = opt.step(m, batch, labels, std::vector<std::uint8_t>(4, 0), 0);
    REQUIRE(losses.size() == 4);
    for (double l : losses) REQUIRE(l > 0.0);
    REQUIRE(m.same_parameters(before));
}

TEST_CASE("single-sample step matches the closed-form softmax gradient", "[model]") {
    // linear model: dW[i][j] = x_i * (p_j - onehot_j), db[j] = p_j - onehot_j
    ClassifierModel m({2, 3}, 123);
    Matrix batch(1, 2);
    batch(0, 0) = 0.7;
    batch(0, 1) = -1.2;
    const std::vector<int> labels = {2};
    const Matrix probs = m.forward(batch);

    const double eta = 0.05;
    ClassifierModel stepped = m;
    SgdOptimizer opt(stepped, SgdSchedule{eta, 0, 0.0});
    opt.step(stepped, batch, labels, {1}, 0);

    for (std::size_t j = 0; j < 3; ++j) {
        const double g = probs(0, j) - (j == 2 ? 1.0 : 0.0);
        REQUIRE(stepped.biases()[0][j] ==
                Catch::Approx(m.biases()[0][j] - eta * g).margin(1e-12));
        for (std::size_t i = 0; i < 2; ++i)
            REQUIRE(stepped.weights()[0](i, j) ==
                    Catch::Approx(m.weights()[0](i, j) - eta * batch(0, i) * g).margin(1e-12));
    }
}

TEST_CASE("masked samples contribute losses but no gradient", "[model]") {
    Rng rng(6);
    ClassifierModel a({4, 8, 3}, 55);
    ClassifierModel b = a;
    const Matrix batch = random_batch(6, 4, rng);
    const auto labels = random_labels(6, 3, rng);

    // a: mask selects first three rows;  b: trained on those rows alone
    SgdOptimizer opt_a(a, SgdSchedule{0.01, 0, 0.0});
    std::vector<std::uint8_t> mask(6, 0);
    mask[0] = mask[1] = mask[2] = 1;
    opt_a.step(a, batch, labels, mask, 0);

    std::vector<std::size_t> idx = {0, 1, 2};
    SgdOptimizer opt_b(b, SgdSchedule{0.01, 0, 0.0});
    opt_b.step(b, batch.take_rows(idx), {labels[0], labels[1], labels[2]},
               std::vector<std::uint8_t>(3, 1), 0);
    REQUIRE(a.same_parameters(b));
}

TEST_CASE("analytic gradients match finite differences", "[model][gradcheck]") {
    Rng rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        ClassifierModel m({5, 12, 8, 4}, rng.next_u64());
        const Matrix batch = random_batch(8, 5, rng);
        const auto labels = random_labels(8, 4, rng);
        REQUIRE(grad_check(m, batch, labels) < 1e-4);
    }
}

TEST_CASE("grad check on a zero batch and repeatability", "[model][gradcheck]") {
    ClassifierModel m({4, 6, 3}, 21);
    const Matrix zeros(5, 4);
    const std::vector<int> labels = {0, 1, 2, 1, 0};
    const double e1 = grad_check(m, zeros, labels);
    const double e2 = grad_check(m, zeros, labels);
    REQUIRE(e1 < 1e-4);
    REQUIRE(e1 == e2);
}

TEST_CASE("train_source separates a linearly separable pair", "[model][train]") {
    ShiftSpec spec;
    spec.k = 2;
    spec.d = 2;
    spec.n_source = 600;
    spec.n_target = 10;
    spec.spread = 0.25;  // means at radius 2: ~8 sigma apart
    spec.seed = 17;
    const auto [source, target] = make_synthetic_pair(spec);
    TrainConfig tc;
    tc.hidden_dims = {16};
    tc.total_iters = 500;
    tc.seed = 17;
    const ClassifierModel model = train_source(source, tc);
    REQUIRE(accuracy(model.predict(source.features()), source.training_labels()) >= 0.99);
}

TEST_CASE("zero training iterations returns the initialized model", "[model][train]") {
    ShiftSpec spec;
    spec.k = 2;
    spec.d = 3;
    spec.n_source = 40;
    spec.n_target = 10;
    spec.seed = 2;
    const auto [source, target] = make_synthetic_pair(spec);
    TrainConfig tc;
    tc.hidden_dims = {8};
    tc.total_iters = 0;
    tc.seed = 31;
    const ClassifierModel model = train_source(source, tc);
    const ClassifierModel fresh({3, 8, 2}, derive_seed(31, 1));
    REQUIRE(model.same_parameters(fresh));
    // near-uniform predictions from the small random init
    const Matrix probs = model.forward(source.features());
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t j = 0; j < probs.cols(); ++j)
            REQUIRE(std::abs(probs(i, j) - 0.5) < 0.45);
}

TEST_CASE("training is deterministic", "[model][train]") {
    ShiftSpec spec;
    spec.k = 3;
    spec.d = 4;
    spec.n_source = 300;
    spec.n_target = 10;
    spec.seed = 4;
    const auto [source, target] = make_synthetic_pair(spec);
    TrainConfig tc;
    tc.hidden_dims = {12, 6};
    tc.total_iters = 200;
    tc.seed = 9;
    const ClassifierModel a = train_source(source, tc);
    const ClassifierModel b = train_source(source, tc);
    REQUIRE(a.same_parameters(b));
}

TEST_CASE("probabilities are permutation-equivariant in the output units", "[model]") {
    Rng rng(8);
    ClassifierModel m({5, 9, 4}, 61);
    const Matrix batch = random_batch(6, 5, rng);
    const Matrix base = m.forward(batch);

    const std::vector<std::size_t> perm = {2, 0, 3, 1};  // new position of each old unit
    ClassifierModel permuted = m;
    auto& w = permuted.weights().back();
    auto& b = permuted.biases().back();
    const Matrix w_old = m.weights().back();
    const auto b_old = m.biases().back();
    for (std::size_t j = 0; j < 4; ++j) {
        b[perm[j]] = b_old[j];
        for (std::size_t i = 0; i < w.rows(); ++i) w(i, perm[j]) = w_old(i, j);
    }
    // equal up to summation order inside the softmax normalizer
    const Matrix swapped = permuted.forward(batch);
    for (std::size_t i = 0; i < base.rows(); ++i)
        for (std::size_t j = 0; j < 4; ++j)
            REQUIRE(std::abs(swapped(i, perm[j]) - base(i, j)) <= 1e-12);
}

TEST_CASE("argmax ties break toward the lowest index", "[model]") {
    Matrix probs(1, 3);
    probs(0, 0) = 0.25;
    probs(0, 1) = 0.375;
    probs(0, 2) = 0.375;
    REQUIRE(ClassifierModel::argmax_rows(probs)[0] == 1);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[checkpoint]") {
    const fs::path dir = fs::temp_directory_path() / "ilnl_model_tests";
    fs::create_directories(dir);
    ClassifierModel m({2, 4, 3}, 1234);
    REQUIRE(m.parameter_count() == 27);  // 2*4+4 + 4*3+3

    const fs::path p = dir / "model.ckpt";
    save_checkpoint(m, p);
    const ClassifierModel back = load_checkpoint(p);
    REQUIRE(back.same_parameters(m));

    Rng rng(5);
    const Matrix batch = random_batch(4, 2, rng);
    REQUIRE(back.forward(batch) == m.forward(batch));

    SECTION("corrupt magic is rejected") {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
        f.close();
        REQUIRE_THROWS_WITH(load_checkpoint(p), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("truncated file is rejected") {
        save_checkpoint(m, p);
        fs::resize_file(p, fs::file_size(p) - 8);
        REQUIRE_THROWS_AS(load_checkpoint(p), data_error);
    }
}
