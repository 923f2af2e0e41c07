#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "support.hpp"
#include "tba/kernels.hpp"
#include "tba/rng.hpp"
#include "tba/tensor.hpp"

using namespace tba;
using tba::test::check_gradient;
using tba::test::random_vec;
using tba::test::rel_err;

TEST_CASE("rng determinism and stream independence") {
    Rng a(123), b(123), c(124);
    for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());
    bool any_diff = false;
    Rng a2(123);
    for (int i = 0; i < 64; ++i) any_diff = any_diff || (a2.next_u64() != c.next_u64());
    CHECK(any_diff);

    Rng f1 = Rng(9).fork("zeta");
    Rng f2 = Rng(9).fork("eps");
    CHECK(f1.seed() != f2.seed());
    CHECK(Rng(9).fork("zeta").seed() == f1.seed());
}

TEST_CASE("gaussian sampling statistics") {
    Rng rng(2024);
    const std::size_t n = 1000000;
    Tensor t = Tensor::gaussian(rng, {static_cast<int>(n)});
    double mean = 0.0;
    for (double v : t.values()) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : t.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 0.01);

    Rng r1(5), r2(5);
    Tensor s1 = Tensor::gaussian(r1, {32});
    Tensor s2 = Tensor::gaussian(r2, {32});
    for (std::size_t i = 0; i < 32; ++i) CHECK(s1.at(i) == s2.at(i));
    Rng r3(6);
    Tensor s3 = Tensor::gaussian(r3, {32});
    bool diff = false;
    for (std::size_t i = 0; i < 32; ++i) diff = diff || (s1.at(i) != s3.at(i));
    CHECK(diff);
}

TEST_CASE("scalar square forward and backward") {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor y = mul(x, x);
    CHECK(y.item() == 9.0);
    backward(y);
    CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("clip forward matches clamp definition") {
    Tensor x = Tensor::from_data({3}, {-2.0, 0.5, 3.0});
    Tensor y = clip(x, -1.0, 1.0);
    CHECK(y.at(0) == -1.0);
    CHECK(y.at(1) == 0.5);
    CHECK(y.at(2) == 1.0);
}

TEST_CASE("conv2d of ones image with ones kernel") {
    // 4x4 ones, 2x2 ones kernel, stride 1 -> 3x3 of 4s; oracle: direct
    // sliding window
    Tensor x = Tensor::full({1, 4, 4}, 1.0);
    Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor y = conv2d(x, w, Tensor(), 1, 0);
    CHECK(y.shape() == Shape{1, 3, 3});
    std::vector<double> oracle(9, 0.0);
    for (int ho = 0; ho < 3; ++ho)
        for (int wo = 0; wo < 3; ++wo) {
            double acc = 0.0;
            for (int kh = 0; kh < 2; ++kh)
                for (int kw = 0; kw < 2; ++kw) acc += 1.0 * 1.0;
            oracle[ho * 3 + wo] = acc;
        }
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(y.at(i) == oracle[i]);
        CHECK(y.at(i) == 4.0);
    }
}

TEST_CASE("conv2d against sliding-window oracle on random input") {
    Rng rng(77);
    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            const int Cin = 2, H = 7, W = 8, Cout = 3, K = 3;
            Tensor x = Tensor::from_data({Cin, H, W}, random_vec(rng, Cin * H * W));
            Tensor w = Tensor::from_data({Cout, Cin, K, K}, random_vec(rng, Cout * Cin * K * K));
            Tensor b = Tensor::from_data({Cout}, random_vec(rng, Cout));
            Tensor y = conv2d(x, w, b, stride, pad);
            const int Ho = (H + 2 * pad - K) / stride + 1;
            const int Wo = (W + 2 * pad - K) / stride + 1;
            REQUIRE(y.shape() == Shape{Cout, Ho, Wo});
            auto in = [&](int c, int h, int ww) -> double {
                h -= pad;
                ww -= pad;
                if (h < 0 || h >= H || ww < 0 || ww >= W) return 0.0;
                return x.at((static_cast<std::size_t>(c) * H + h) * W + ww);
            };
            for (int co = 0; co < Cout; ++co)
                for (int ho = 0; ho < Ho; ++ho)
                    for (int wo = 0; wo < Wo; ++wo) {
                        double acc = b.at(co);
                        for (int ci = 0; ci < Cin; ++ci)
                            for (int kh = 0; kh < K; ++kh)
                                for (int kw = 0; kw < K; ++kw)
                                    acc += w.at(((static_cast<std::size_t>(co) * Cin + ci) * K + kh) * K + kw) *
                                           in(ci, ho * stride + kh, wo * stride + kw);
                        double got = y.at((static_cast<std::size_t>(co) * Ho + ho) * Wo + wo);
                        CHECK(rel_err(got, acc) < 1e-12);
                    }
        }
    }
}

TEST_CASE("backward rejects non-scalar roots") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor y = add(x, x);
    CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("sum of sign has zero gradient") {
    Tensor x = Tensor::from_data({4}, {0.3, -0.7, 1.2, -2.0}, true);
    Tensor y = sum(sign(x));
    CHECK(!y.requires_grad());  // sign detaches
    Tensor z = sum(x);  // reuse leaf in a real graph to confirm grads exist there
    backward(z);
    CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("shape mismatch errors name the operator and shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    try {
        add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("from_data rejects non-finite values") {
    CHECK_THROWS(Tensor::from_data({2}, {1.0, std::nan("")}));
    CHECK_THROWS(Tensor::from_data({1}, {std::numeric_limits<double>::infinity()}));
}

TEST_CASE("gradient property: every differentiable operator vs central differences") {
    Rng rng(31337);
    const double tol = 1e-4;
    const std::size_t trials = 100;

    auto run = [&](const char* name, std::size_t n,
                   const std::function<Tensor(const Tensor&)>& build, bool kinks = false) {
        auto rep = check_gradient(rng, n, build, trials, 2, 1e-5, kinks);
        INFO(name);
        CHECK(rep.trials_run == trials);
        CHECK(rep.probes > trials);  // the kink guard may drop a few probes
        CHECK(rep.max_rel_err < tol);
    };

    run("add", 8, [](const Tensor& x) { return sum_squares(add(x, scale(x, 0.5))); });
    run("sub", 8, [](const Tensor& x) { return sum_squares(sub(scale(x, 2.0), x)); });
    run("mul", 8, [](const Tensor& x) { return sum(mul(x, x)); });
    run("scale", 8, [](const Tensor& x) { return sum(scale(x, -1.7)); });
    run("relu", 12, [](const Tensor& x) { return sum_squares(relu(x)); }, true);
    run("softplus", 12, [](const Tensor& x) { return sum_squares(softplus(x)); });
    run("clip", 12, [](const Tensor& x) { return sum_squares(clip(x, -0.5, 0.5)); }, true);
    run("sum", 9, [](const Tensor& x) { return sum(x); });
    run("sum_squares", 9, [](const Tensor& x) { return sum_squares(x); });
    run("matmul", 12, [](const Tensor& x) {
        Tensor m = reshape(x, {3, 4});
        Tensor w = Tensor::from_data({4, 2}, {0.3, -0.2, 0.7, 0.1, -0.5, 0.4, 0.2, 0.9});
        return sum_squares(matmul(m, w));
    });
    run("matvec", 6, [](const Tensor& x) {
        Tensor w = Tensor::from_data({3, 6},
                                     {0.3, -0.2, 0.7, 0.1, -0.5, 0.4, 0.2, 0.9, -0.1, 0.6, 0.5, -0.3,
                                      -0.8, 0.2, 0.1, 0.4, -0.6, 0.7});
        return sum_squares(matmul(w, x));
    });
    run("conv2d", 2 * 6 * 6, [](const Tensor& x) {
        Tensor img = reshape(x, {2, 6, 6});
        Tensor w = Tensor::full({3, 2, 3, 3}, 0.11);
        Tensor b = Tensor::from_data({3}, {0.1, -0.2, 0.05});
        return sum_squares(conv2d(img, w, b, 2, 1));
    });
    run("global_avg_pool", 2 * 4 * 4, [](const Tensor& x) {
        return sum_squares(global_avg_pool(reshape(x, {2, 4, 4})));
    });
    run("concat", 6, [](const Tensor& x) { return sum_squares(concat(x, scale(x, 2.0))); });
    run("reshape", 6, [](const Tensor& x) { return sum_squares(reshape(x, {2, 3})); });
    run("upsample2", 1 * 3 * 3, [](const Tensor& x) {
        return sum_squares(upsample2(reshape(x, {1, 3, 3})));
    });
    run("add_channel_bias", 2 * 3 * 3, [](const Tensor& x) {
        Tensor img = reshape(x, {2, 3, 3});
        Tensor b = Tensor::from_data({2}, {0.4, -0.3});
        return sum_squares(add_channel_bias(img, b));
    });
    run("row_select", 8, [](const Tensor& x) {
        return sum_squares(row_select(reshape(x, {4, 2}), 2));
    });
}

TEST_CASE("gradient of composed conv-pool-linear network vs finite differences") {
    Rng rng(99);
    Rng wrng(100);
    const int H = 8, W = 8;
    Tensor w1 = Tensor::from_data({4, 1, 3, 3}, random_vec(wrng, 4 * 9, -0.4, 0.4));
    Tensor b1 = Tensor::from_data({4}, random_vec(wrng, 4, -0.1, 0.1));
    Tensor w2 = Tensor::from_data({6, 4, 3, 3}, random_vec(wrng, 6 * 4 * 9, -0.3, 0.3));
    Tensor b2 = Tensor::from_data({6}, random_vec(wrng, 6, -0.1, 0.1));
    Tensor wl = Tensor::from_data({3, 6}, random_vec(wrng, 18, -0.5, 0.5));
    auto net = [&](const Tensor& x) {
        Tensor img = reshape(x, {1, H, W});
        Tensor h1 = relu(conv2d(img, w1, b1, 1, 1));
        Tensor h2 = relu(conv2d(h1, w2, b2, 2, 0));
        Tensor f = global_avg_pool(h2);
        return sum_squares(matmul(wl, f));
    };
    auto rep = check_gradient(rng, H * W, net, 20, 4, 1e-5, false);
    CHECK(rep.probes >= 60);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("seeded computation is bit-reproducible") {
    auto run = [] {
        Rng rng(4242);
        Tensor x = Tensor::gaussian(rng, {2, 6, 6}, true);
        Tensor w = Tensor::gaussian(rng, {3, 2, 3, 3});
        Tensor y = sum_squares(relu(conv2d(x, w, Tensor(), 1, 1)));
        backward(y);
        std::vector<double> out(x.grad().begin(), x.grad().end());
        out.push_back(y.item());
        return out;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("full graph computation identical under scalar and avx2 dispatch") {
    if (!kernels::avx2_table()) return;
    auto run = [] {
        Rng rng(777);
        Tensor x = Tensor::gaussian(rng, {1, 8, 8}, true);
        Tensor w1 = Tensor::gaussian(rng, {4, 1, 3, 3}, true);
        Tensor w2 = Tensor::from_data({3, 4}, test::random_vec(rng, 12), true);
        Tensor h = relu(conv2d(x, w1, Tensor(), 2, 1));
        Tensor y = sum_squares(matmul(w2, global_avg_pool(h)));
        backward(y);
        std::vector<double> out;
        out.push_back(y.item());
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), w1.grad().begin(), w1.grad().end());
        out.insert(out.end(), w2.grad().begin(), w2.grad().end());
        return out;
    };
    REQUIRE(kernels::select(kernels::Backend::Scalar));
    auto s = run();
    REQUIRE(kernels::select(kernels::Backend::Avx2));
    auto a = run();
    kernels::select(kernels::Backend::Auto);
    REQUIRE(s.size() == a.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == a[i]);
}
