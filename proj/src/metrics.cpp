#include "npmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace npmix {

namespace {

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

void check_same_shape(const MixtureParams& est, const MixtureParams& truth) {
    if (est.components() != truth.components() || est.grid_size() != truth.grid_size() ||
        est.dim() != truth.dim())
        throw DimensionMismatch("metrics: estimate and truth differ in K, grid or p");
}

double symmetric_spectral_norm(const Matrix& m) {
    try {
        return spectral_norm(m);
    } catch (const NonConvergence&) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
}

std::vector<Index> min_cost_permutation(const Matrix& cost) {
    const Index K = cost.rows();
    if (K > 6) return hungarian(cost);
    std::vector<Index> perm(sz(K));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::vector<Index> best = perm;
    auto total = [&](const std::vector<Index>& p) {
        double s = 0.0;
        for (Index k = 0; k < K; ++k) s += cost(k, p[sz(k)]);
        return s;
    };
    double best_cost = total(perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
        const double c = total(perm);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    }
    return best;
}

}  // namespace

Matrix alignment_costs(const MixtureParams& est, const MixtureParams& truth) {
    check_same_shape(est, truth);
    const Index K = truth.components();
    Matrix c = Matrix::Zero(K, K);
    for (Index k = 0; k < K; ++k)
        for (Index j = 0; j < K; ++j)
            for (Index g = 0; g < truth.grid_size(); ++g)
                c(k, j) += (est.theta[sz(j)][sz(g)] - truth.theta[sz(k)][sz(g)]).norm();
    return c;
}

std::vector<Index> align_labels(const MixtureParams& est, const MixtureParams& truth) {
    return min_cost_permutation(alignment_costs(est, truth));
}

std::vector<Index> hungarian(const Matrix& cost) {
    // Potentials formulation, 1-based with a virtual column 0.
    const Index n = cost.rows();
    if (cost.cols() != n) throw DimensionMismatch("hungarian: cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(sz(n + 1), 0.0), v(sz(n + 1), 0.0);
    std::vector<Index> match(sz(n + 1), 0), way(sz(n + 1), 0);
    for (Index i = 1; i <= n; ++i) {
        match[0] = i;
        Index j0 = 0;
        std::vector<double> minv(sz(n + 1), inf);
        std::vector<char> used(sz(n + 1), 0);
        do {
            used[sz(j0)] = 1;
            const Index i0 = match[sz(j0)];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= n; ++j) {
                if (used[sz(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[sz(i0)] - v[sz(j)];
                if (cur < minv[sz(j)]) {
                    minv[sz(j)] = cur;
                    way[sz(j)] = j0;
                }
                if (minv[sz(j)] < delta) {
                    delta = minv[sz(j)];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                if (used[sz(j)]) {
                    u[sz(match[sz(j)])] += delta;
                    v[sz(j)] -= delta;
                } else {
                    minv[sz(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[sz(j0)] != 0);
        do {
            const Index j1 = way[sz(j0)];
            match[sz(j0)] = match[sz(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> out(sz(n));
    for (Index j = 1; j <= n; ++j) out[sz(match[sz(j)] - 1)] = j - 1;
    return out;
}

MixtureParams permute_components(const MixtureParams& params, const std::vector<Index>& perm) {
    const Index K = params.components();
    if (static_cast<Index>(perm.size()) != K) throw DimensionMismatch("permute_components: wrong length");
    MixtureParams out = params;
    for (Index k = 0; k < K; ++k) {
        const Index src = perm[sz(k)];
        out.pi.row(k) = params.pi.row(src);
        out.mu[sz(k)] = params.mu[sz(src)];
        out.theta[sz(k)] = params.theta[sz(src)];
    }
    return out;
}

double kl_loss(const Matrix& sigma_true, const Matrix& theta_hat) {
    if (sigma_true.rows() != theta_hat.rows()) throw DimensionMismatch("kl_loss: dimension mismatch");
    const double ld = log_det(sigma_true) + log_det(theta_hat);  // throws NotPositiveDefinite
    const double tr = sigma_true.cwiseProduct(theta_hat).sum();
    return std::max(0.0, tr - ld - static_cast<double>(sigma_true.rows()));
}

EdgeRates edge_rates(const Matrix& truth, const Matrix& est) {
    const Index p = truth.rows();
    Index edges = 0, hits = 0, non_edges = 0, false_hits = 0;
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < j; ++i) {
            const bool found = est(i, j) != 0.0;
            if (truth(i, j) != 0.0) {
                ++edges;
                hits += found;
            } else {
                ++non_edges;
                false_hits += found;
            }
        }
    EdgeRates r;
    r.tpr = edges == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(edges);
    r.fpr = non_edges == 0 ? 0.0 : static_cast<double>(false_hits) / static_cast<double>(non_edges);
    return r;
}

EvalReport report(const MixtureParams& est_raw, const MixtureParams& truth) {
    check_same_shape(est_raw, truth);
    EvalReport r;
    r.alignment = align_labels(est_raw, truth);
    const MixtureParams est = permute_components(est_raw, r.alignment);
    const Index K = truth.components();
    const Index G = truth.grid_size();
    for (Index g = 0; g < G; ++g) {
        double tpr = 0.0, fpr = 0.0;
        for (Index k = 0; k < K; ++k) {
            const Matrix& t = truth.theta[sz(k)][sz(g)];
            const Matrix& e = est.theta[sz(k)][sz(g)];
            const Matrix d = e - t;
            r.asl += symmetric_spectral_norm(d);
            r.afl += d.norm();
            r.akl += kl_loss(invert_spd(t), e);
            const double dp = est.pi(k, g) - truth.pi(k, g);
            r.rase_pi_sq += dp * dp;
            const EdgeRates er = edge_rates(t, e);
            tpr += er.tpr;
            fpr += er.fpr;
        }
        r.atpr += tpr / static_cast<double>(K);
        r.afpr += fpr / static_cast<double>(K);
    }
    const double inv_g = 1.0 / static_cast<double>(G);
    r.asl *= inv_g;
    r.afl *= inv_g;
    r.akl *= inv_g;
    r.rase_pi_sq *= inv_g;
    r.rase_pi = std::sqrt(r.rase_pi_sq);
    r.atpr *= inv_g;
    r.afpr *= inv_g;
    return r;
}

std::vector<Index> adjacent_alignment(const MixtureParams& est, Index g) {
    const Index K = est.components();
    if (g < 0 || g + 1 >= est.grid_size()) throw InvalidInput("adjacent_alignment: grid index out of range");
    Matrix c(K, K);
    for (Index k = 0; k < K; ++k)
        for (Index j = 0; j < K; ++j)
            c(k, j) = (est.theta[sz(j)][sz(g + 1)] - est.theta[sz(k)][sz(g)]).norm();
    return min_cost_permutation(c);
}

double adjacent_identity_rate(const MixtureParams& est) {
    const Index G = est.grid_size();
    if (G < 2) return 1.0;
    Index identity = 0;
    for (Index g = 0; g + 1 < G; ++g) {
        const auto perm = adjacent_alignment(est, g);
        bool id = true;
        for (std::size_t k = 0; k < perm.size(); ++k) id = id && perm[k] == static_cast<Index>(k);
        identity += id;
    }
    return static_cast<double>(identity) / static_cast<double>(G - 1);
}

}  // namespace npmix
