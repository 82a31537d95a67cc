#pragma once

#include "npmix/linalg.hpp"

namespace npmix {

// max_theta  log|theta| - tr(theta * scatter) - lambda * sum_{i != j} |theta_ij|
struct GlassoProblem {
    Matrix scatter;
    double lambda = 0.0;
};

struct GlassoSolution {
    Matrix theta;  // precision estimate, exact zeros where the penalty is active
    Matrix w;      // inverse of theta
    int iterations = 0;
    double kkt_residual = 0.0;
    // kkt_residual <= GlassoOptions::certify_tol; false after MaxIterations.
    bool certified = false;
};

struct GlassoOptions {
    double tol = 1e-8;          // sweep change in w, relative to mean |diag(scatter)|
    double inner_tol = 1e-12;   // coordinate change in a column lasso
    int max_sweeps = 500;
    int max_inner = 1000;
    double certify_tol = 1e-6;
};

// Block coordinate descent over columns of the covariance estimate, each
// column being a lasso solved by cyclic coordinate descent. The diagonal is
// unpenalized. Throws DegenerateScatter when a diagonal entry is <= 0.
GlassoSolution glasso_solve(const GlassoProblem& problem,
                            const GlassoSolution* warm_start = nullptr,
                            const GlassoOptions& options = {});

// Maximum violation of the stationarity conditions at candidate (PD).
double kkt_residual(const GlassoProblem& problem, const Matrix& candidate);

// Penalized objective value of candidate; -inf when candidate is not PD.
double glasso_objective(const GlassoProblem& problem, const Matrix& candidate);

// Sum of |theta_ij| over i != j.
double offdiag_l1(const Matrix& theta);

// Penalty passed to the solver so that the weighted M-step objective
// a_k/(2n) [log|theta| - tr(theta A)] - base_lambda ||theta||_{1,off}
// is maximized exactly: 2 n base_lambda / a_k.
double effective_lambda(double base_lambda, Index n, double a_k);

// Diagonal loading eps * I with eps = 1e-3 mean diag if scatter is not PD.
Matrix repair_scatter(const Matrix& scatter, bool* repaired = nullptr);

}  // namespace npmix
