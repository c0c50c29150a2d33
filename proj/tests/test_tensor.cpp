#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fcn/errors.hpp"
#include "fcn/gradcheck.hpp"
#include "fcn/rng.hpp"
#include "fcn/tensor.hpp"

using namespace fcn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Keeps values away from the ReLU kink so central differences stay clean.
Tensor random_away_from_zero(std::vector<std::size_t> shape, Rng& rng, double margin = 1e-2) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = rng.normal();
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
        t[i] = v;
    }
    return t;
}

}  // namespace

TEST_CASE("matmul identity and small hand cases") {
    const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    CHECK(matmul(Tensor::identity(2), a) == a);

    const Tensor row = Tensor::matrix(1, 2, {1, 2});
    const Tensor col = Tensor::matrix(2, 1, {3, 4});
    const Tensor prod = matmul(row, col);
    CHECK(prod.shape() == std::vector<std::size_t>{1, 1});
    CHECK(prod[0] == 11.0);
}

TEST_CASE("matmul shape error names both shapes") {
    const Tensor a({2, 3});
    const Tensor b({2, 3});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("matmul backward matches central differences") {
    Rng rng(42);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor proj = random_tensor({3, 2}, rng);  // fixed projection to a scalar

    Tensor grad_a(a.shape()), grad_b(b.shape());
    matmul_backward(a, b, proj, grad_a, grad_b);

    const auto f = [&](const std::vector<Tensor>& p) { return dot(matmul(p[0], p[1]), proj); };
    const auto report = finite_diff_check(f, {a, b}, {grad_a, grad_b}, 1e-5);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("matmul associativity on random conformable triples") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = random_tensor({3, 5}, rng);
        const Tensor b = random_tensor({5, 4}, rng);
        const Tensor c = random_tensor({4, 2}, rng);
        const Tensor left = matmul(matmul(a, b), c);
        const Tensor right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            CHECK(left[i] == doctest::Approx(right[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("relu values and gradient") {
    const Tensor x = Tensor::vector({-1, 0, 2});
    const Tensor y = relu(x);
    CHECK(y == Tensor::vector({0, 0, 2}));

    const Tensor neg = Tensor::vector({-3, -1, -0.5});
    CHECK(relu(neg) == Tensor::vector({0, 0, 0}));
    const Tensor grad = relu_backward(neg, Tensor::vector({1, 1, 1}));
    CHECK(grad == Tensor::vector({0, 0, 0}));

    Rng rng(3);
    const Tensor input = random_away_from_zero({7}, rng);
    const Tensor proj = random_tensor({7}, rng);
    Tensor analytic = relu_backward(input, proj);
    const auto f = [&](const std::vector<Tensor>& p) { return dot(relu(p[0]), proj); };
    CHECK(finite_diff_check(f, {input}, {analytic}, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("sigmoid values, saturation and gradient") {
    CHECK(sigmoid(Tensor::vector({0}))[0] == 0.5);

    const double saturated = sigmoid(Tensor::vector({-100}))[0];
    CHECK(saturated > 0.0);
    CHECK(saturated < 1e-40);
    CHECK(std::isfinite(saturated));

    Rng rng(4);
    const Tensor input = random_tensor({9}, rng);
    const Tensor proj = random_tensor({9}, rng);
    const Tensor analytic = sigmoid_backward(sigmoid(input), proj);
    const auto f = [&](const std::vector<Tensor>& p) { return dot(sigmoid(p[0]), proj); };
    CHECK(finite_diff_check(f, {input}, {analytic}, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("softmax rows: uniform, analytic, normalization, gradient") {
    const Tensor zeros({1, 4});
    const Tensor uniform = softmax_rows(zeros);
    for (std::size_t j = 0; j < 4; ++j) CHECK(uniform[j] == 0.25);

    const Tensor logs = Tensor::matrix(1, 2, {std::log(1.0), std::log(3.0)});
    const Tensor probs = softmax_rows(logs);
    CHECK(probs[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(probs[1] == doctest::Approx(0.75).epsilon(1e-12));

    Rng rng(5);
    const Tensor x = random_tensor({5, 7}, rng);
    const Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
            CHECK(y(i, j) > 0.0);
            CHECK(y(i, j) < 1.0);
            sum += y(i, j);
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    const Tensor proj = random_tensor({5, 7}, rng);
    const Tensor analytic = softmax_rows_backward(y, proj);
    const auto f = [&](const std::vector<Tensor>& p) { return dot(softmax_rows(p[0]), proj); };
    CHECK(finite_diff_check(f, {x}, {analytic}, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("softmax stays stable on large inputs") {
    const Tensor big = Tensor::matrix(1, 3, {1000.0, 1000.0, -1000.0});
    const Tensor y = softmax_rows(big);
    CHECK(y.all_finite());
    CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("conv_window output length and zero filter") {
    Rng rng(6);
    const Tensor z = random_tensor({2, 14, 3}, rng);
    const Tensor filter = random_tensor({2, 4, 3}, rng);
    CHECK(conv_window(z, filter).dim(0) == 11);  // 14 - 4 + 1

    const Tensor zero_filter({2, 4, 3});
    const Tensor out = conv_window(z, zero_filter);
    for (std::size_t t = 0; t < out.size(); ++t) CHECK(out[t] == 0.0);
}

TEST_CASE("conv_window one-hot filter selects a feature column") {
    // 2 channels, N_a = 5, h = 2; filter picks z[0, t, 0].
    Rng rng(8);
    const Tensor z = random_tensor({2, 5, 3}, rng);
    Tensor filter({2, 2, 3});
    filter(0, 0, 0) = 1.0;
    const Tensor out = conv_window(z, filter);
    REQUIRE(out.dim(0) == 4);
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(out[t] == z(0, t, 0));
    }
}

TEST_CASE("conv_window rejects windows taller than the input") {
    const Tensor z({2, 3, 4});
    const Tensor filter({2, 5, 4});
    CHECK_THROWS_AS(conv_window(z, filter), ShapeError);
}

TEST_CASE("conv_window is linear in the filter") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor z = random_tensor({3, 8, 4}, rng);
        const Tensor f1 = random_tensor({3, 2, 4}, rng);
        const Tensor f2 = random_tensor({3, 2, 4}, rng);
        const double alpha = rng.normal(), beta = rng.normal();

        Tensor combo(f1.shape());
        for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = alpha * f1[i] + beta * f2[i];

        const Tensor lhs = conv_window(z, combo);
        const Tensor r1 = conv_window(z, f1);
        const Tensor r2 = conv_window(z, f2);
        for (std::size_t t = 0; t < lhs.size(); ++t) {
            CHECK(lhs[t] == doctest::Approx(alpha * r1[t] + beta * r2[t]).epsilon(1e-9));
        }
    }
}

TEST_CASE("conv_window ignores all-zero channels regardless of their filter slice") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = random_tensor({3, 6, 4}, rng);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t k = 0; k < 4; ++k) z(1, r, k) = 0.0;  // silence channel 1

        const Tensor f1 = random_tensor({3, 3, 4}, rng);
        Tensor f2 = f1;
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t k = 0; k < 4; ++k) f2(1, r, k) = rng.normal();

        CHECK(conv_window(z, f1) == conv_window(z, f2));
    }
}

TEST_CASE("conv_window backward matches central differences") {
    Rng rng(11);
    const Tensor z = random_tensor({2, 7, 3}, rng);
    const Tensor filter = random_tensor({2, 3, 3}, rng);
    const Tensor proj = random_tensor({5}, rng);

    Tensor grad_z(z.shape()), grad_f(filter.shape());
    conv_window_backward(z, filter, proj, grad_z, grad_f);

    const auto f = [&](const std::vector<Tensor>& p) { return dot(conv_window(p[0], p[1]), proj); };
    CHECK(finite_diff_check(f, {z, filter}, {grad_z, grad_f}, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("maxpool value, argmax, ties and empty input") {
    const auto pooled = maxpool_positions(Tensor::vector({1, 5, 3}));
    CHECK(pooled.value == 5.0);
    CHECK(pooled.index == 1);

    const auto tied = maxpool_positions(Tensor::vector({2, 2, 2}));
    CHECK(tied.index == 0);  // ties break to the lowest index
    Tensor grad({3});
    maxpool_backward(tied, 1.5, grad);
    CHECK(grad == Tensor::vector({1.5, 0, 0}));

    CHECK_THROWS_AS(maxpool_positions(Tensor({0, 2})), ShapeError);
}

TEST_CASE("conv + maxpool is invariant to shifting an in-bounds localized pattern") {
    // A single pattern row on a zero background; shifting it by one position
    // leaves the pooled value unchanged because the sliding window covers the
    // pattern fully at both offsets.
    Rng rng(12);
    const std::size_t channels = 2, rows = 9, width = 3, h = 2;
    const Tensor filter = random_tensor({channels, h, width}, rng);
    std::vector<double> pattern(width);
    for (auto& v : pattern) v = rng.normal();

    auto pooled_at = [&](std::size_t row) {
        Tensor z({channels, rows, width});
        for (std::size_t k = 0; k < width; ++k) z(0, row, k) = pattern[k];
        return maxpool_positions(conv_window(z, filter)).value;
    };
    CHECK(pooled_at(3) == pooled_at(4));
}

TEST_CASE("ops keep finite inputs finite") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_tensor({4, 6}, rng, 50.0);
        const Tensor b = random_tensor({6, 3}, rng, 50.0);
        CHECK(matmul(a, b).all_finite());
        CHECK(relu(a).all_finite());
        CHECK(sigmoid(a).all_finite());
        CHECK(softmax_rows(a).all_finite());
    }
}

TEST_CASE("finite_diff_check reference behaviors") {
    // f(theta) = theta^2 at theta = 3: both gradients equal 6.
    const auto square = [](const std::vector<Tensor>& p) { return p[0][0] * p[0][0]; };
    const auto report =
        finite_diff_check(square, {Tensor::vector({3.0})}, {Tensor::vector({6.0})}, 1e-4);
    CHECK(report.max_rel_err < 1e-9);

    const auto constant = [](const std::vector<Tensor>&) { return 4.2; };
    const auto flat =
        finite_diff_check(constant, {Tensor::vector({1.0})}, {Tensor::vector({0.0})}, 1e-4);
    CHECK(flat.max_rel_err == 0.0);
}
