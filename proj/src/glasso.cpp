#include "npmix/glasso.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace npmix {

namespace {

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

double sign_of(double x) {
    return (x > 0.0) - (x < 0.0);
}

// Reconstructs theta from the covariance iterate and the column lasso
// coefficients; beta(:, j) is column j's coefficient vector, beta(j, j) unused.
Matrix theta_from_columns(const Matrix& w, const Matrix& beta) {
    const Index p = w.rows();
    Matrix theta(p, p);
    for (Index j = 0; j < p; ++j) {
        double quad = 0.0;
        for (Index i = 0; i < p; ++i)
            if (i != j) quad += w(i, j) * beta(i, j);
        const double tjj = 1.0 / (w(j, j) - quad);
        theta(j, j) = tjj;
        for (Index i = 0; i < p; ++i)
            if (i != j) theta(i, j) = -beta(i, j) * tjj;
    }
    // Average the two triangles; coefficients that are zero in both stay
    // exactly zero.
    for (Index j = 0; j < p; ++j)
        for (Index i = j + 1; i < p; ++i) {
            const double a = theta(i, j);
            const double b = theta(j, i);
            const double v = (a == 0.0 && b == 0.0) ? 0.0 : 0.5 * (a + b);
            theta(i, j) = v;
            theta(j, i) = v;
        }
    return theta;
}

// One cyclic coordinate-descent lasso for column j:
//   min_b 1/2 b' W11 b - s12' b + lambda |b|_1
// Returns the largest change of the updated covariance column.
double update_column(Matrix& w, Matrix& beta, const Matrix& s, Index j, double lambda,
                     const GlassoOptions& options, std::vector<Index>& idx, Vector& u) {
    const Index p = w.rows();
    idx.clear();
    for (Index i = 0; i < p; ++i)
        if (i != j) idx.push_back(i);
    const Index m = static_cast<Index>(idx.size());

    // u = W11 * b
    u.setZero(m);
    for (Index a = 0; a < m; ++a) {
        const double ba = beta(idx[a], j);
        if (ba == 0.0) continue;
        for (Index c = 0; c < m; ++c) u(c) += w(idx[c], idx[a]) * ba;
    }

    for (int it = 0; it < options.max_inner; ++it) {
        double max_delta = 0.0;
        for (Index a = 0; a < m; ++a) {
            const Index ia = idx[a];
            const double waa = w(ia, ia);
            const double old = beta(ia, j);
            const double r = s(ia, j) - (u(a) - waa * old);
            const double next = soft_threshold(r, lambda) / waa;
            const double delta = next - old;
            if (delta != 0.0) {
                beta(ia, j) = next;
                for (Index c = 0; c < m; ++c) u(c) += w(idx[c], ia) * delta;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta <= options.inner_tol) break;
    }

    double change = 0.0;
    for (Index a = 0; a < m; ++a) {
        const Index ia = idx[a];
        change = std::max(change, std::abs(w(ia, j) - u(a)));
        w(ia, j) = u(a);
        w(j, ia) = u(a);
    }
    return change;
}

}  // namespace

double offdiag_l1(const Matrix& theta) {
    return theta.cwiseAbs().sum() - theta.diagonal().cwiseAbs().sum();
}

double glasso_objective(const GlassoProblem& problem, const Matrix& candidate) {
    auto chol = try_cholesky(candidate);
    if (!chol) return -std::numeric_limits<double>::infinity();
    return chol->log_det() - (candidate.cwiseProduct(problem.scatter)).sum() -
           problem.lambda * offdiag_l1(candidate);
}

double kkt_residual(const GlassoProblem& problem, const Matrix& candidate) {
    const Matrix inv = invert_spd(candidate);
    const Matrix grad = inv - problem.scatter;
    const Index p = candidate.rows();
    double worst = 0.0;
    for (Index j = 0; j < p; ++j) {
        for (Index i = 0; i < p; ++i) {
            double r;
            if (i == j) {
                r = std::abs(grad(i, i));
            } else if (candidate(i, j) != 0.0) {
                r = std::abs(grad(i, j) - problem.lambda * sign_of(candidate(i, j)));
            } else {
                r = std::max(0.0, std::abs(grad(i, j)) - problem.lambda);
            }
            worst = std::max(worst, r);
        }
    }
    return worst;
}

double effective_lambda(double base_lambda, Index n, double a_k) {
    if (!(a_k > 1e-12)) throw DegenerateComponent("effective_lambda: empty mixture (a_k <= 1e-12)");
    if (base_lambda < 0.0) throw InvalidInput("lambda must be nonnegative");
    return 2.0 * static_cast<double>(n) * base_lambda / a_k;
}

Matrix repair_scatter(const Matrix& scatter, bool* repaired) {
    if (try_cholesky(scatter)) {
        if (repaired) *repaired = false;
        return scatter;
    }
    if (repaired) *repaired = true;
    return jitter_until_pd(scatter, 1e-3);
}

GlassoSolution glasso_solve(const GlassoProblem& problem, const GlassoSolution* warm_start,
                            const GlassoOptions& options) {
    const Matrix& s = problem.scatter;
    const Index p = s.rows();
    if (s.cols() != p || p == 0) throw DimensionMismatch("glasso: scatter must be square and non-empty");
    for (Index i = 0; i < p; ++i)
        if (!(s(i, i) > 0.0)) throw DegenerateScatter("glasso: scatter diagonal must be positive");
    const double lambda = problem.lambda;
    if (lambda < 0.0) throw InvalidInput("glasso: lambda must be nonnegative");

    GlassoSolution sol;
    if (p == 1) {
        sol.theta = Matrix::Constant(1, 1, 1.0 / s(0, 0));
        sol.w = s;
        sol.kkt_residual = 0.0;
        sol.certified = true;
        return sol;
    }

    Matrix w = s;
    Matrix beta = Matrix::Zero(p, p);
    if (warm_start && warm_start->theta.rows() == p) {
        Matrix warm_w = warm_start->w;
        warm_w.diagonal() = s.diagonal();
        if (try_cholesky(warm_w)) {
            w = warm_w;
            for (Index j = 0; j < p; ++j)
                for (Index i = 0; i < p; ++i)
                    if (i != j) beta(i, j) = -warm_start->theta(i, j) / warm_start->theta(j, j);
        }
    }

    const double scale = s.diagonal().cwiseAbs().mean();
    double tol = options.tol * scale;
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(p));
    Vector u;

    Matrix theta;
    double residual = std::numeric_limits<double>::infinity();
    int sweep = 0;
    while (sweep < options.max_sweeps) {
        double change = 0.0;
        for (Index j = 0; j < p; ++j)
            change = std::max(change, update_column(w, beta, s, j, lambda, options, idx, u));
        ++sweep;
        if (!std::isfinite(change) || !w.allFinite()) {
            // lost positive definiteness along the way; start over from S
            w = s;
            beta.setZero();
            continue;
        }
        if (change > tol) continue;

        theta = theta_from_columns(w, beta);
        if (try_cholesky(theta)) {
            residual = kkt_residual(problem, theta);
            if (residual <= options.certify_tol) break;
        }
        tol *= 0.1;
    }
    if (theta.size() == 0 || residual > options.certify_tol) {
        theta = theta_from_columns(w, beta);
        residual = try_cholesky(theta) ? kkt_residual(problem, theta)
                                       : std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(residual)) throw NotPositiveDefinite(p - 1);

    sol.theta = std::move(theta);
    sol.w = invert_spd(sol.theta);
    sol.iterations = sweep;
    sol.kkt_residual = residual;
    sol.certified = residual <= options.certify_tol;
    return sol;
}

}  // namespace npmix
