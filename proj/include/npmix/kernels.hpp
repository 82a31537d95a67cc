#pragma once

#include <functional>
#include <span>
#include <string>

#include "npmix/linalg.hpp"

namespace npmix {

enum class KernelFamily { Epanechnikov, Gaussian };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(const std::string& name);

struct KernelSpec {
    KernelFamily family = KernelFamily::Epanechnikov;
    double bandwidth = 1.0;

    void validate() const;
};

struct KernelConstants {
    double k0 = 0.0;       // K(0)
    double int_k2 = 0.0;   // integral of K^2
    double tau_k = 0.0;
    double df_unit = 0.0;  // degrees of freedom of one smoothed function
};

// Unscaled kernel K(u).
double kernel_unit(KernelFamily family, double u);
// Self-convolution (K * K)(t).
double kernel_self_convolution(KernelFamily family, double t);
// Half-width of the support of K (infinite kernels report a truncation
// radius beyond which K is below double precision).
double kernel_support_radius(KernelFamily family);

// K_h(d) = K(d / h) / h.
double kernel_eval(const KernelSpec& spec, double d);

// Adaptive Simpson quadrature to absolute tolerance tol.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol, int max_depth = 50);

// tau_K = (K(0) - int K^2 / 2) / int (K - (K*K)/2)^2.
double kernel_tau(KernelFamily family, double tol = 1e-8);

KernelConstants kernel_constants(const KernelSpec& spec, double support_length);

// w_n = K_h(z_n - z). Throws AllWeightsZero if every weight vanishes.
Vector kernel_weights(const KernelSpec& spec, std::span<const double> zs, double z);

}  // namespace npmix
