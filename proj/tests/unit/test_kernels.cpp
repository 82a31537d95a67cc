#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "npmix/kernels.hpp"

using namespace npmix;

namespace {
// tests/oracles/oracles.py (mpmath quadrature, 30 digits)
constexpr double kTauEpanechnikov = 2.1152736377727435;
constexpr double kTauGaussian = 2.5375076944629282;
}  // namespace

TEST_CASE("kernel evaluation") {
    KernelSpec e{KernelFamily::Epanechnikov, 1.0};
    CHECK(kernel_eval(e, 0.0) == 0.75);
    CHECK(kernel_eval(e, 2.0) == 0.0);
    CHECK(kernel_eval(e, 1.0) == 0.0);
    e.bandwidth = 2.0;
    CHECK(kernel_eval(e, 0.0) == 0.375);

    KernelSpec g{KernelFamily::Gaussian, 1.0};
    CHECK(kernel_eval(g, 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));

    for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian})
        for (double h : {0.1, 0.65, 1.45})
            for (double d : {0.0, 0.03, 0.4, 1.2, 7.0}) {
                KernelSpec s{fam, h};
                CHECK(kernel_eval(s, d) == kernel_eval(s, -d));
                CHECK(kernel_eval(s, d) >= 0.0);
            }
}

TEST_CASE("kernels integrate to one") {
    for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian})
        for (double h : {0.2, 1.0, 3.5}) {
            KernelSpec s{fam, h};
            const double r = kernel_support_radius(fam) * h;
            const double mass = integrate_adaptive([&](double d) { return kernel_eval(s, d); }, -r, r, 1e-10);
            CHECK(std::abs(mass - 1.0) < 1e-6);
        }
}

TEST_CASE("self convolution") {
    // (K*K)(t) = 3/160 (2-|t|)^3 (t^2 + 6|t| + 4) for the Epanechnikov kernel
    for (double t : {0.0, 0.3, 0.7, 1.0, 1.6, 2.5}) {
        const double a = std::abs(t);
        const double closed = a < 2 ? 3.0 / 160.0 * std::pow(2 - a, 3) * (t * t + 6 * a + 4) : 0.0;
        CHECK(std::abs(kernel_self_convolution(KernelFamily::Epanechnikov, t) - closed) < 1e-10);
    }
    for (double t : {0.0, 0.5, 2.0}) {
        const double closed = std::exp(-t * t / 4) / std::sqrt(4 * std::numbers::pi);
        CHECK(std::abs(kernel_self_convolution(KernelFamily::Gaussian, t) - closed) < 1e-10);
    }
}

TEST_CASE("kernel constants") {
    const auto e = kernel_constants({KernelFamily::Epanechnikov, 1.0}, 1.0);
    CHECK(e.k0 == doctest::Approx(0.75));
    CHECK(e.int_k2 == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(e.k0 - 0.5 * e.int_k2 == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(std::abs(e.tau_k - kTauEpanechnikov) < 1e-7);

    const auto g = kernel_constants({KernelFamily::Gaussian, 1.0}, 1.0);
    CHECK(g.k0 == doctest::Approx(0.398942280401).epsilon(1e-10));
    CHECK(g.int_k2 == doctest::Approx(0.282094791774).epsilon(1e-10));
    CHECK(std::abs(g.tau_k - kTauGaussian) < 1e-7);

    // stable under tightening the quadrature
    for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian})
        CHECK(std::abs(kernel_tau(fam, 1e-8) - kernel_tau(fam, 0.5e-8)) < 1e-6);
}

TEST_CASE("df_unit scales as 1/h and with the support length") {
    for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian}) {
        const auto base = kernel_constants({fam, 1.0}, 1.0);
        CHECK(base.df_unit == doctest::Approx(base.tau_k * (base.k0 - 0.5 * base.int_k2)).epsilon(1e-14));
        for (double h : {0.3, 0.65, 1.45}) {
            const auto c = kernel_constants({fam, h}, 1.0);
            CHECK(std::abs(c.df_unit * h - base.df_unit) < 1e-10);
        }
        CHECK(kernel_constants({fam, 1.0}, 2.5).df_unit == doctest::Approx(2.5 * base.df_unit).epsilon(1e-14));
    }
}

TEST_CASE("weights at a grid point") {
    KernelSpec e{KernelFamily::Epanechnikov, 0.5};
    std::vector<double> one{0.3};
    const Vector w = kernel_weights(e, one, 0.3);
    CHECK(w.size() == 1);
    CHECK(w(0) == doctest::Approx(0.75 / 0.5));

    KernelSpec narrow{KernelFamily::Epanechnikov, 0.1};
    std::vector<double> far{0.0, 0.5, 0.9};
    CHECK_THROWS_AS(kernel_weights(narrow, far, 0.25), AllWeightsZero);

    KernelSpec g{KernelFamily::Gaussian, 1.0};
    std::vector<double> sym{-1.0, -0.2, 0.0, 0.2, 1.0};
    const Vector ws = kernel_weights(g, sym, 0.0);
    for (int i = 0; i < 5; ++i) CHECK(ws(i) == ws(4 - i));
}

TEST_CASE("kernel spec validation and names") {
    CHECK_THROWS_AS((KernelSpec{KernelFamily::Gaussian, 0.0}).validate(), InvalidInput);
    CHECK_THROWS_AS((KernelSpec{KernelFamily::Gaussian, -1.0}).validate(), InvalidInput);
    CHECK(parse_kernel_family(to_string(KernelFamily::Gaussian)) == KernelFamily::Gaussian);
    CHECK(parse_kernel_family("epanechnikov") == KernelFamily::Epanechnikov);
    CHECK_THROWS_AS(parse_kernel_family("box"), InvalidInput);
}
