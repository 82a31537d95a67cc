#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "npmix/glasso.hpp"
#include "npmix/kernels.hpp"
#include "npmix/linalg.hpp"

namespace npmix {

// N observations x_n in R^p with scalar covariates z_n.
struct Dataset {
    Matrix x;  // N x p
    Vector z;  // N

    Index size() const { return x.rows(); }
    Index dim() const { return x.cols(); }
    void validate() const;
    Dataset subset(std::span<const Index> rows) const;
    double z_min() const { return z.minCoeff(); }
    double z_max() const { return z.maxCoeff(); }
};

struct GridSpec {
    std::vector<double> points;  // strictly increasing

    static GridSpec uniform(double lo, double hi, Index count);
    Index size() const { return static_cast<Index>(points.size()); }
    void validate(Index min_points = 2) const;
};

// Per-grid-point, per-mixture parameters.
struct MixtureParams {
    GridSpec grid;
    Matrix pi;                               // K x G
    std::vector<std::vector<Vector>> mu;     // [k][g]
    std::vector<std::vector<Matrix>> theta;  // [k][g], precision matrices

    static MixtureParams zeros(Index components, const GridSpec& grid, Index dim);
    Index components() const { return pi.rows(); }
    Index grid_size() const { return pi.cols(); }
    Index dim() const { return mu.empty() || mu[0].empty() ? 0 : mu[0][0].size(); }
};

struct ComponentParams {
    double pi = 0.0;
    Vector mu;
    Matrix theta;
};
using PointParams = std::vector<ComponentParams>;

struct Responsibilities {
    Matrix gamma;  // K x N, columns are probability vectors
};

struct EMConfig {
    Index K = 1;
    double lambda = 0.0;
    KernelSpec kernel;
    GridSpec grid;
    int max_iters = 200;
    double rel_tol = 1e-5;
    int restarts = 5;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

struct FitResult {
    MixtureParams params;
    // Responsibilities that produced the final parameters.
    Responsibilities gamma;
    // objective_trace[g][t]: penalized local log-likelihood at grid point g
    // after iteration t (t = 0 is the initializing M-step). Semiparametric
    // fits carry a single global channel.
    std::vector<std::vector<double>> objective_trace;
    bool converged = false;
    int iterations = 0;
    double mean_objective = 0.0;
    int restart = 0;  // index of the winning restart
};

// Per-observation bracketing on the grid; clamps outside [u_1, u_G].
struct GridBracket {
    Index lower = 0;
    Index upper = 0;
    double t = 0.0;  // weight of `upper`
};
GridBracket bracket(const GridSpec& grid, double z);

double log_density(const Vector& x, const Vector& mu, const Matrix& theta);

// Bayes-rule posteriors with log-sum-exp; params[n] holds the K mixtures
// interpolated at z_n.
Responsibilities e_step(const Dataset& data, std::span<const PointParams> params);

// Mixing proportions at one grid point from responsibilities and kernel
// weights there. Throws AllWeightsZero.
Vector m_step_pi(const Responsibilities& gamma, const Vector& weights);

// Responsibility- and kernel-weighted mean. Throws DegenerateComponent.
Vector m_step_mu(const Dataset& data, const Vector& gamma_k, const Vector& weights);

// Normalized weighted scatter A around mu with weights gamma_k * w.
Matrix weighted_scatter(const Dataset& data, const Vector& gamma_k, const Vector& weights,
                        const Vector& mu);

// Builds the scatter, maps lambda through effective_lambda and solves the
// penalized log-det problem (warm-started when given).
GlassoSolution m_step_theta(const Dataset& data, const Vector& gamma_k, const Vector& weights,
                            const Vector& mu, double lambda,
                            const GlassoSolution* warm_start = nullptr);

// Entrywise linear interpolation between bracketing grid points; pi is
// renormalized and theta is jitter-repaired if it loses definiteness.
PointParams interpolate(const MixtureParams& params, double z);

// Penalized local log-likelihood at grid point g:
//   (1/N) sum_n w_n log sum_k pi_k phi(x_n | mu_k, theta_k) - lambda sum_k ||theta_k||_{1,off}
double local_objective(const Dataset& data, const MixtureParams& params, Index g,
                       const Vector& weights, double lambda);

// Kernel weights at every grid point (G x N). Throws AllWeightsZero.
Matrix grid_weights(const Dataset& data, const KernelSpec& kernel, const GridSpec& grid);

// Generalized EM for the kernel-smoothed mixture. A shared E-step at the
// observation points feeds the M-steps at every grid point. When init is
// given, the restarts are replaced by one run started from it.
FitResult fit(const Dataset& data, const EMConfig& config, const MixtureParams* init = nullptr);

struct TimeVaryingFit {
    GridSpec grid;
    std::vector<Vector> mu;
    std::vector<GlassoSolution> solutions;
};

// Single-mixture model: one weighted glasso per grid point.
TimeVaryingFit time_varying_fit(const Dataset& data, double lambda, const KernelSpec& kernel,
                                const GridSpec& grid);

// Mixture without covariate (unit weights, one grid point).
FitResult finite_mixture_fit(const Dataset& data, Index K, double lambda, int restarts,
                             std::uint64_t seed, int max_iters = 200, double rel_tol = 1e-5);

// Two-stage fit: local pi with shared (mu, theta), then global (mu, theta)
// with the stage-one pi frozen.
FitResult semiparametric_fit(const Dataset& data, const EMConfig& config);

struct StationarityReport {
    double max_kkt_residual = 0.0;
    double max_pi_drift = 0.0;
};

// KKT residual of every final theta against its own final scatter, and the
// change of pi under one more E-step / pi-update.
StationarityReport check_stationarity(const Dataset& data, const EMConfig& config,
                                      const FitResult& result);

}  // namespace npmix
