#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "support.hpp"
#include "tba/dhng.hpp"
#include "tba/kernels.hpp"

using namespace tba;
namespace fs = std::filesystem;

namespace {

Tensor random_image(Rng& rng, int h, int w) {
    std::vector<double> px(static_cast<std::size_t>(h) * w);
    for (double& v : px) v = rng.uniform01();
    return Tensor::from_data({1, h, w}, std::move(px));
}

}  // namespace

TEST_CASE("feature extractor matches the hand-computed conv+pool value") {
    // conv1 = known 3x3 kernel (no padding so every output is interior),
    // conv2 = 1x1 identity, zero biases: constant image c pools to c*sum(k)
    FeatureExtractor fe;
    std::vector<double> k = {0.5, -0.25, 1.0, 0.75, 0.1, -0.4, 0.2, 0.3, 0.6};
    double ksum = 0.0;
    for (double v : k) ksum += v;
    fe.conv1_w = Tensor::from_data({1, 1, 3, 3}, k);
    fe.conv1_b = Tensor::zeros({1});
    fe.conv2_w = Tensor::from_data({1, 1, 1, 1}, {1.0});
    fe.conv2_b = Tensor::zeros({1});
    fe.stride1 = fe.pad1 = fe.stride2 = fe.pad2 = 0;
    fe.stride1 = fe.stride2 = 1;

    const double c = 0.37;
    Tensor img = Tensor::full({1, 8, 8}, c);
    Tensor out = fe.extract(img);
    CHECK(out.shape() == Shape{1});
    CHECK(out.item() == doctest::Approx(c * ksum).epsilon(1e-12));

    // zero image, zero biases -> zero features
    Tensor zimg = Tensor::zeros({1, 8, 8});
    CHECK(fe.extract(zimg).item() == 0.0);

    // production-shaped extractor emits the declared feature dimension
    Rng rng(3);
    VaeGenerator gen(16, 16, 8, Rng(1));
    Tensor ell = gen.feat.extract(random_image(rng, 16, 16));
    CHECK(ell.shape() == Shape{16});
}

TEST_CASE("vae with sigma forced to zero is deterministic in (eps, image)") {
    VaeGenerator gen(16, 16, 8, Rng(2));
    {
        auto w = gen.sigma_w.values_mut();
        std::fill(w.begin(), w.end(), 0.0);
        auto b = gen.sigma_b.values_mut();
        std::fill(b.begin(), b.end(), -10000.0);  // softplus underflows to exactly 0
    }
    Rng rng(4);
    Tensor eps = Tensor::gaussian(rng, {1, 16, 16});
    Tensor img = random_image(rng, 16, 16);
    Rng zeta1(100), zeta2(222);  // different zeta streams must not matter
    Tensor b1 = gen.generate(eps, img, zeta1);
    Tensor b2 = gen.generate(eps, img, zeta2);
    REQUIRE(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1.at(i) == b2.at(i));
    CHECK(b1.shape() == Shape{1, 16, 16});
}

TEST_CASE("vae branch is seeded-deterministic end to end") {
    auto run = [] {
        VaeGenerator gen(16, 16, 8, Rng(9));
        Rng eps_rng(5), zeta(6), img_rng(7);
        Tensor eps = Tensor::gaussian(eps_rng, {1, 16, 16});
        Tensor img = random_image(img_rng, 16, 16);
        Tensor out = gen.generate(eps, img, zeta);
        return std::vector<double>(out.values().begin(), out.values().end());
    };
    CHECK(run() == run());
}

TEST_CASE("vae gradients w.r.t. theta_1 match finite differences") {
    VaeGenerator gen(16, 16, 6, Rng(11));
    Rng rng(12);
    Tensor eps = Tensor::gaussian(rng, {1, 16, 16});
    Tensor img = random_image(rng, 16, 16);

    auto loss_value = [&] {
        Rng zeta(77);  // frozen zeta stream per evaluation
        return sum_squares(gen.generate(eps, img, zeta)).item();
    };
    auto loss_graph = [&] {
        Rng zeta(77);
        return sum_squares(gen.generate(eps, img, zeta));
    };

    for (Tensor* param : {&gen.mu_w, &gen.sigma_b, &gen.dec1_w, &gen.feat.conv1_w, &gen.dec_w}) {
        for (Tensor& p : gen.parameters()) p.zero_grad();
        Tensor loss = loss_graph();
        backward(loss);
        auto g = param->grad();
        REQUIRE(!g.empty());
        Rng pick(31);
        for (int probe = 0; probe < 4; ++probe) {
            std::size_t i = pick.uniform_int(0, static_cast<std::int64_t>(param->size()) - 1);
            auto v = param->values_mut();
            double orig = v[i];
            const double h = 1e-5;
            v[i] = orig + h;
            double fp = loss_value();
            v[i] = orig - h;
            double fm = loss_value();
            v[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            CHECK(test::rel_err(g[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("reparameterization gradient: dz/dmu = I, dz/dsigma = diag(zeta)") {
    Rng rng(21);
    const int n = 12;
    Tensor mu = Tensor::from_data({n}, test::random_vec(rng, n), true);
    Tensor sigma = Tensor::from_data({n}, test::random_vec(rng, n, 0.1, 1.0), true);
    Tensor zeta = Tensor::gaussian(rng, {n});
    Tensor weight = Tensor::from_data({n}, test::random_vec(rng, n));

    Tensor z = add(mu, mul(sigma, zeta));
    backward(sum(mul(z, weight)));
    for (int i = 0; i < n; ++i) {
        CHECK(mu.grad()[i] == doctest::Approx(weight.at(i)).epsilon(1e-12));
        CHECK(sigma.grad()[i] == doctest::Approx(weight.at(i) * zeta.at(i)).epsilon(1e-12));
    }
}

TEST_CASE("diffusion forward process") {
    Rng rng(31);
    DiffusionGenerator gen(16, 16, Rng(1), 50);
    Tensor chi = Tensor::gaussian(rng, {4, 4, 4});
    Tensor eps = Tensor::gaussian(rng, {4, 4, 4});

    SUBCASE("t = 0 leaves the latent unchanged") {
        Tensor out = diffusion_forward(chi, 0, gen.steps, eps);
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == chi.at(i));
    }
    SUBCASE("t = T from a zero latent returns the noise") {
        Tensor zero = Tensor::zeros({4, 4, 4});
        Tensor out = diffusion_forward(zero, gen.steps, gen.steps, eps);
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == eps.at(i));
    }
    SUBCASE("linearity in the noise argument") {
        const int t = 17;
        Tensor two = scale(eps, 2.0);
        Tensor a = diffusion_forward(chi, t, gen.steps, two);
        Tensor b = diffusion_forward(chi, t, gen.steps, eps);
        double alpha = static_cast<double>(t) / gen.steps;
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a.at(i) - b.at(i) == doctest::Approx(alpha * eps.at(i)).epsilon(1e-12));
    }
    SUBCASE("schedule endpoints and range check") {
        CHECK(gen.alpha(0) == 0.0);
        CHECK(gen.alpha(gen.steps) == 1.0);
        CHECK_THROWS(diffusion_forward(chi, -1, gen.steps, eps));
        CHECK_THROWS(diffusion_forward(chi, gen.steps + 1, gen.steps, eps));
    }
}

TEST_CASE("zero convolution makes eps_star independent of the image at init") {
    DiffusionGenerator gen(16, 16, Rng(5), 50);
    Rng rng(41);
    Tensor chi_t = Tensor::gaussian(rng, {4, 4, 4});
    for (int trial = 0; trial < 20; ++trial) {
        Tensor img_a = random_image(rng, 16, 16);
        Tensor img_b = random_image(rng, 16, 16);
        Tensor zeros_img = Tensor::zeros({1, 16, 16});
        Tensor ea = gen.predict_noise(chi_t, 7, 2, img_a);
        Tensor eb = gen.predict_noise(chi_t, 7, 2, img_b);
        Tensor ez = gen.predict_noise(chi_t, 7, 2, zeros_img);
        REQUIRE(ea.shape() == chi_t.shape());
        for (std::size_t i = 0; i < ea.size(); ++i) {
            CHECK(ea.at(i) == eb.at(i));
            CHECK(ea.at(i) == ez.at(i));
        }
    }
    CHECK_THROWS(gen.predict_noise(chi_t, 7, 99, random_image(rng, 16, 16)));
    CHECK_THROWS(gen.predict_noise(chi_t, 999, 0, random_image(rng, 16, 16)));
}

TEST_CASE("controlnet loss definition") {
    Rng rng(51);
    Tensor eps = Tensor::gaussian(rng, {2, 3, 3});
    CHECK(controlnet_loss(eps, eps).item() == 0.0);

    Tensor zero = Tensor::zeros({2, 3, 3});
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) mean_sq += eps.at(i) * eps.at(i);
    mean_sq /= static_cast<double>(eps.size());
    CHECK(controlnet_loss(eps, zero).item() == doctest::Approx(mean_sq).epsilon(1e-14));

    Tensor a = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor b = Tensor::from_data({2, 2}, {0.5, 2.5, 2.0, 4.5});
    double expect = ((1.0 - 0.5) * (1.0 - 0.5) + (2.0 - 2.5) * (2.0 - 2.5) +
                     (3.0 - 2.0) * (3.0 - 2.0) + (4.0 - 4.5) * (4.0 - 4.5)) /
                    4.0;
    CHECK(controlnet_loss(a, b).item() == doctest::Approx(expect).epsilon(1e-14));
    CHECK_THROWS_AS(controlnet_loss(a, eps), ShapeError);
}

TEST_CASE("controlnet generation: budget, determinism, zero decoder") {
    Rng rng(61);
    SUBCASE("zero decoder yields beta2 = 0") {
        DiffusionGenerator gen(16, 16, Rng(3), 50);
        for (Tensor* t : {&gen.dec1_w, &gen.dec1_b, &gen.dec2_w, &gen.dec2_b}) {
            auto v = t->values_mut();
            std::fill(v.begin(), v.end(), 0.0);
        }
        Rng sample_rng(9);
        Tensor eps = Tensor::gaussian(rng, {1, 16, 16});
        auto out = controlnet_generate(gen, eps, random_image(rng, 16, 16), 1, sample_rng, 0.05);
        for (std::size_t i = 0; i < out.beta2.size(); ++i) CHECK(out.beta2.at(i) == 0.0);
    }
    SUBCASE("budget invariant holds even for a boosted decoder") {
        DiffusionGenerator gen(16, 16, Rng(3), 50);
        for (Tensor* t : {&gen.dec1_w, &gen.dec2_w}) {
            auto v = t->values_mut();
            for (double& x : v) x *= 50.0;
        }
        Rng sample_rng(10);
        for (int trial = 0; trial < 25; ++trial) {
            Tensor eps = Tensor::gaussian(rng, {1, 16, 16});
            auto out = controlnet_generate(gen, eps, random_image(rng, 16, 16), 0, sample_rng, 0.05);
            double peak = 0.0;
            for (std::size_t i = 0; i < out.beta2.size(); ++i)
                peak = std::max(peak, std::fabs(out.beta2.at(i)));
            CHECK(peak <= 0.05 + 1e-15);
            CHECK(out.beta2.shape() == Shape{1, 16, 16});
            CHECK(out.eps_star.shape() == Shape{4, 4, 4});
            CHECK(out.t >= 1);
            CHECK(out.t <= gen.steps);
        }
    }
    SUBCASE("seeded determinism of (eps_star, beta2)") {
        auto run = [] {
            DiffusionGenerator gen(16, 16, Rng(3), 50);
            Rng eps_rng(8), img_rng(9), sample_rng(10);
            Tensor eps = Tensor::gaussian(eps_rng, {1, 16, 16});
            Tensor img;
            {
                std::vector<double> px(256);
                for (double& v : px) v = img_rng.uniform01();
                img = Tensor::from_data({1, 16, 16}, std::move(px));
            }
            auto out = controlnet_generate(gen, eps, img, 3, sample_rng, 0.05);
            std::vector<double> flat(out.eps_star.values().begin(), out.eps_star.values().end());
            flat.insert(flat.end(), out.beta2.values().begin(), out.beta2.values().end());
            flat.push_back(out.t);
            return flat;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("diffusion gradients w.r.t. theta_2 match finite differences") {
    DiffusionGenerator gen(16, 16, Rng(13), 50);
    Rng rng(14);
    Tensor chi_t = Tensor::gaussian(rng, {4, 4, 4});
    Tensor img = random_image(rng, 16, 16);
    const int t = 21, cond = 2;

    auto loss_graph = [&] { return sum_squares(gen.predict_noise(chi_t, t, cond, img)); };
    for (Tensor* param : {&gen.den1_w, &gen.time_proj_w, &gen.prompt_table, &gen.ctrl_w}) {
        for (Tensor& p : gen.parameters()) p.zero_grad();
        backward(loss_graph());
        auto g = param->grad();
        REQUIRE(!g.empty());
        Rng pick(33);
        for (int probe = 0; probe < 4; ++probe) {
            std::size_t i = pick.uniform_int(0, static_cast<std::int64_t>(param->size()) - 1);
            auto v = param->values_mut();
            double orig = v[i];
            const double h = 1e-5;
            v[i] = orig + h;
            double fp = loss_graph().item();
            v[i] = orig - h;
            double fm = loss_graph().item();
            v[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            CHECK(test::rel_err(g[i], fd) < 1e-4);
        }
    }
    // note: ctrl_w reaches the output only through the zero conv, so its
    // gradient is exactly zero at init; confirm rather than skip
    for (Tensor& p : gen.parameters()) p.zero_grad();
    backward(loss_graph());
    for (double v : gen.ctrl_w.grad()) CHECK(v == 0.0);
    bool zero_w_gets_grad = false;
    for (double v : gen.zero_w.grad()) zero_w_gets_grad = zero_w_gets_grad || v != 0.0;
    CHECK(zero_w_gets_grad);
}

TEST_CASE("prompt embeddings diverge after one training step with distinct ids") {
    DiffusionGenerator gen(16, 16, Rng(17), 50);
    {
        auto v = gen.prompt_table.values_mut();
        std::fill(v.begin(), v.end(), 0.0);  // make ids indistinguishable first
    }
    Rng rng(18);
    Tensor chi_t = Tensor::gaussian(rng, {4, 4, 4});
    Tensor img = random_image(rng, 16, 16);
    Tensor target0 = Tensor::gaussian(rng, {4, 4, 4});
    Tensor target1 = Tensor::gaussian(rng, {4, 4, 4});

    Tensor before0 = gen.predict_noise(chi_t, 5, 0, img);
    Tensor before1 = gen.predict_noise(chi_t, 5, 1, img);
    for (std::size_t i = 0; i < before0.size(); ++i) CHECK(before0.at(i) == before1.at(i));

    for (Tensor& p : gen.parameters()) p.zero_grad();
    Tensor loss = add(controlnet_loss(target0, gen.predict_noise(chi_t, 5, 0, img)),
                      controlnet_loss(target1, gen.predict_noise(chi_t, 5, 1, img)));
    backward(loss);
    sgd_step(gen.parameters(), 0.1);

    Tensor after0 = gen.predict_noise(chi_t, 5, 0, img);
    Tensor after1 = gen.predict_noise(chi_t, 5, 1, img);
    bool diverged = false;
    for (std::size_t i = 0; i < after0.size(); ++i) diverged = diverged || (after0.at(i) != after1.at(i));
    CHECK(diverged);
}

TEST_CASE("combine_noise is an elementwise sum") {
    Tensor b1 = Tensor::from_data({2, 2}, {0.1, 0.2, 0.3, 0.4});
    Tensor b2 = Tensor::from_data({2, 2}, {0.01, 0.02, 0.03, 0.04});
    Tensor both = combine_noise(b1, b2);
    CHECK(both.at(0) == doctest::Approx(0.11).epsilon(1e-15));
    CHECK(both.at(1) == doctest::Approx(0.22).epsilon(1e-15));
    CHECK(both.at(2) == doctest::Approx(0.33).epsilon(1e-15));
    CHECK(both.at(3) == doctest::Approx(0.44).epsilon(1e-15));

    Tensor ba = combine_noise(b2, b1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(both.at(i) == ba.at(i));

    Tensor zero = Tensor::zeros({2, 2});
    Tensor same = combine_noise(b1, zero);
    for (std::size_t i = 0; i < 4; ++i) CHECK(same.at(i) == b1.at(i));

    CHECK_THROWS_AS(combine_noise(b1, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("generator checkpoints round trip bit exactly") {
    fs::path dir = fs::temp_directory_path() / "tba_gen_ckpt";
    fs::create_directories(dir);
    VaeGenerator vae(16, 16, 8, Rng(23));
    vae.save(dir / "vae");
    VaeGenerator vae_back = VaeGenerator::load(dir / "vae");
    CHECK(vae_back.parameter_snapshot() == vae.parameter_snapshot());

    DiffusionGenerator diff(16, 16, Rng(29), 40);
    diff.save(dir / "diffusion");
    DiffusionGenerator diff_back = DiffusionGenerator::load(dir / "diffusion");
    CHECK(diff_back.parameter_snapshot() == diff.parameter_snapshot());
    CHECK(diff_back.steps == 40);
    fs::remove_all(dir);
}
