#include "npmix/kernels.hpp"

#include <cmath>
#include <numbers>

namespace npmix {

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::Epanechnikov: return "epanechnikov";
        case KernelFamily::Gaussian: return "gaussian";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(const std::string& name) {
    if (name == "epanechnikov") return KernelFamily::Epanechnikov;
    if (name == "gaussian") return KernelFamily::Gaussian;
    throw InvalidInput("unknown kernel family '" + name + "'");
}

void KernelSpec::validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
        throw InvalidInput("kernel bandwidth must be positive and finite");
}

double kernel_unit(KernelFamily family, double u) {
    switch (family) {
        case KernelFamily::Epanechnikov: {
            const double a = std::abs(u);
            return a < 1.0 ? 0.75 * (1.0 - a * a) : 0.0;
        }
        case KernelFamily::Gaussian:
            return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    }
    return 0.0;
}

double kernel_support_radius(KernelFamily family) {
    return family == KernelFamily::Epanechnikov ? 1.0 : 12.0;
}

double kernel_self_convolution(KernelFamily family, double t) {
    const double r = kernel_support_radius(family);
    const double lo = std::max(-r, t - r);
    const double hi = std::min(r, t + r);
    if (lo >= hi) return 0.0;
    auto integrand = [family, t](double s) {
        return kernel_unit(family, s) * kernel_unit(family, t - s);
    };
    return integrate_adaptive(integrand, lo, hi, 1e-12);
}

double kernel_eval(const KernelSpec& spec, double d) {
    const double h = spec.bandwidth;
    return kernel_unit(spec.family, std::abs(d) / h) / h;
}

namespace {

double simpson(double fa, double fm, double fb, double a, double b) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a, double b, double fa,
                     double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(fa, flm, fm, a, m);
    const double right = simpson(fm, frm, fb, m, b);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol, int max_depth) {
    if (a == b) return 0.0;
    // Start from a fixed partition so kinks at the support ends and at zero
    // cannot hide between the first sample points.
    constexpr int kPieces = 8;
    const double width = (b - a) / kPieces;
    double total = 0.0;
    for (int i = 0; i < kPieces; ++i) {
        const double lo = a + i * width;
        const double hi = (i + 1 == kPieces) ? b : lo + width;
        const double fa = f(lo);
        const double fb = f(hi);
        const double fm = f(0.5 * (lo + hi));
        total += adaptive_step(f, lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi),
                               tol / kPieces, max_depth);
    }
    return total;
}

double kernel_tau(KernelFamily family, double tol) {
    const double k0 = kernel_unit(family, 0.0);
    const double r = kernel_support_radius(family);
    const double int_k2 = integrate_adaptive(
        [family](double u) { return kernel_unit(family, u) * kernel_unit(family, u); }, -r, r,
        1e-13);
    auto integrand = [family](double t) {
        const double d = kernel_unit(family, t) - 0.5 * kernel_self_convolution(family, t);
        return d * d;
    };
    // (K * K) is supported on twice the radius of K.
    const double denom = integrate_adaptive(integrand, -2.0 * r, 2.0 * r, tol);
    return (k0 - 0.5 * int_k2) / denom;
}

KernelConstants kernel_constants(const KernelSpec& spec, double support_length) {
    spec.validate();
    if (!(support_length > 0.0)) throw InvalidInput("covariate support length must be positive");
    KernelConstants c;
    switch (spec.family) {
        case KernelFamily::Epanechnikov:
            c.k0 = 0.75;
            c.int_k2 = 0.6;
            break;
        case KernelFamily::Gaussian:
            c.k0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
            c.int_k2 = 1.0 / (2.0 * std::sqrt(std::numbers::pi));
            break;
    }
    // tau_K depends only on the family; cache it.
    static const double tau_epan = kernel_tau(KernelFamily::Epanechnikov);
    static const double tau_gauss = kernel_tau(KernelFamily::Gaussian);
    c.tau_k = spec.family == KernelFamily::Epanechnikov ? tau_epan : tau_gauss;
    c.df_unit = c.tau_k / spec.bandwidth * support_length * (c.k0 - 0.5 * c.int_k2);
    return c;
}

Vector kernel_weights(const KernelSpec& spec, std::span<const double> zs, double z) {
    Vector w(static_cast<Index>(zs.size()));
    bool any = false;
    for (std::size_t n = 0; n < zs.size(); ++n) {
        w(static_cast<Index>(n)) = kernel_eval(spec, zs[n] - z);
        any = any || w(static_cast<Index>(n)) > 0.0;
    }
    if (!any) throw AllWeightsZero(z);
    return w;
}

}  // namespace npmix
