#include "doctest.h"

#include <cmath>

#include "zerowm/losses.hpp"
#include "zerowm/rng.hpp"
#include "zerowm/synth.hpp"

using namespace zw;

namespace {

Tensor<double> to_f64(const Image& img) { return img.cast<double>(); }

}  // namespace

TEST_CASE("ssim of an image with itself is exactly 1") {
    const Tensor<double> x = to_f64(synth_image(1, 0));
    CHECK(ssim(x, x) == 1.0);
}

TEST_CASE("ssim of constant images matches the closed form") {
    // mu1=0, mu2=1, all variances zero:
    //   s = (2*0*1+C1)(0+C2) / ((0+1+C1)(0+C2)) = C1 / (1 + C1)
    Tensor<double> zeros({3, 128, 128});
    Tensor<double> ones({3, 128, 128});
    ones.fill(1.0);
    const double c1 = 1e-4;
    const double expected = c1 / (1.0 + c1);
    const double got = ssim(zeros, ones);
    CHECK(std::fabs(got - expected) < 1e-6);
    CHECK(got < 0.05);
}

TEST_CASE("ssim decreases as uniform noise grows") {
    const Image base = synth_image(5, 3);
    const Tensor<double> x = to_f64(base);
    double prev = 1.0;
    for (double amp : {0.05, 0.1, 0.2}) {
        Tensor<double> noisy = x;
        for (int64_t i = 0; i < noisy.numel(); ++i)
            noisy[i] = std::clamp(noisy[i] + (stateless_unit(42, i) - 0.5) * 2 * amp, 0.0, 1.0);
        const double s = ssim(x, noisy);
        CHECK(s > 0.0);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("reconstruction loss oracles") {
    const Tensor<double> x = to_f64(synth_image(7, 2));
    SUBCASE("identical pair gives exactly zero") {
        CHECK(loss_reconstruction(x, x, 0.5, 0.5) == 0.0);
    }
    SUBCASE("pure-MSE mode with a constant offset") {
        Tensor<double> shifted = x;
        for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.1;
        CHECK(std::fabs(loss_reconstruction(x, shifted, 0.0, 1.0) - 0.01) < 1e-12);
    }
    SUBCASE("pure-SSIM mode equals 1 - ssim") {
        Tensor<double> other = to_f64(synth_image(7, 5));
        CHECK(loss_reconstruction(x, other, 1.0, 0.0) ==
              doctest::Approx(1.0 - ssim(x, other)).epsilon(1e-12));
    }
}

TEST_CASE("discriminator loss oracles") {
    SUBCASE("a perfect discriminator scores near zero") {
        Tensor<double> pc({2}), pd({2});
        pc.fill(0.999999);
        pd.fill(0.000001);
        CHECK(loss_discriminator(pc, pd) < 1e-5);
    }
    SUBCASE("an undecided discriminator scores 2 ln 2") {
        Tensor<double> pc({4}), pd({4});
        pc.fill(0.5);
        pd.fill(0.5);
        CHECK(std::fabs(loss_discriminator(pc, pd) - 2.0 * std::log(2.0)) < 1e-12);
    }
    SUBCASE("probabilities exactly at 0 and 1 are clamped, not infinite") {
        Tensor<double> pc({1}), pd({1});
        pc[0] = 0.0;  // worst case for the clean term
        pd[0] = 1.0;  // worst case for the distorted term
        const double v = loss_discriminator(pc, pd);
        CHECK(std::isfinite(v));
        CHECK(v == doctest::Approx(-2.0 * std::log(kProbClamp)).epsilon(1e-9));
    }
}

TEST_CASE("adversarial loss oracles") {
    SUBCASE("p = 0.5 gives ln 0.5") {
        Tensor<double> p({3});
        p.fill(0.5);
        CHECK(std::fabs(loss_adversarial(p) - std::log(0.5)) < 1e-12);
    }
    SUBCASE("monotonically decreasing in the fooling probability") {
        double prev = 1e9;
        for (double pv : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
            Tensor<double> p({1});
            p[0] = pv;
            const double v = loss_adversarial(p);
            CHECK(v < prev);
            prev = v;
        }
    }
    SUBCASE("p -> 1 clamps at log of the probability floor") {
        Tensor<double> p({1});
        p[0] = 1.0;
        CHECK(loss_adversarial(p) == doctest::Approx(std::log(kProbClamp)).epsilon(1e-9));
    }
}

TEST_CASE("watermark loss oracles") {
    SUBCASE("hard matched probabilities score at the clamp floor") {
        const int64_t k = 30;
        Tensor<double> probs({k});
        std::vector<uint8_t> target(k);
        Rng rng(9);
        for (int64_t i = 0; i < k; ++i) {
            target[i] = rng.bernoulli(0.5);
            probs[i] = target[i] ? 1.0 : 0.0;
        }
        const double v = loss_watermark(probs, target);
        CHECK(v >= 0.0);
        CHECK(v <= k * 1e-6);
    }
    SUBCASE("all-0.5 probabilities score k ln 2") {
        Tensor<double> probs({30});
        probs.fill(0.5);
        std::vector<uint8_t> target(30, 1);
        CHECK(std::fabs(loss_watermark(probs, target) - 30.0 * std::log(2.0)) < 1e-9);
    }
    SUBCASE("length mismatch is rejected") {
        Tensor<double> probs({4});
        probs.fill(0.5);
        CHECK_THROWS_AS(loss_watermark(probs, std::vector<uint8_t>(5, 0)), PreconditionError);
    }
}
