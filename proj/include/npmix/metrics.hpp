#pragma once

#include <vector>

#include "npmix/em.hpp"

namespace npmix {

struct EvalReport {
    double asl = 0.0;
    double afl = 0.0;
    double akl = 0.0;
    double rase_pi = 0.0;     // root of rase_pi_sq
    double rase_pi_sq = 0.0;
    double atpr = 0.0;
    double afpr = 0.0;
    // alignment[k] is the estimated mixture matched to true mixture k.
    std::vector<Index> alignment;
};

// Cost C(k, j) = sum_g ||theta_hat_j - theta_k||_F between true mixture k
// and estimated mixture j.
Matrix alignment_costs(const MixtureParams& est, const MixtureParams& truth);

// Permutation minimizing the sum of alignment_costs. Exhaustive for K <= 6
// (identity wins ties), Hungarian assignment beyond.
std::vector<Index> align_labels(const MixtureParams& est, const MixtureParams& truth);

// Minimum-cost assignment for a square cost matrix: result[row] = column.
std::vector<Index> hungarian(const Matrix& cost);

// Component k of the result is component perm[k] of params.
MixtureParams permute_components(const MixtureParams& params, const std::vector<Index>& perm);

// tr(sigma_true theta_hat) - log|sigma_true theta_hat| - p
double kl_loss(const Matrix& sigma_true, const Matrix& theta_hat);

struct EdgeRates {
    double tpr = 1.0;
    double fpr = 0.0;
};
// Off-diagonal (i < j) recovery with exact zero detection. TPR is 1 when
// the truth has no edges; FPR is 0 when it has no non-edges.
EdgeRates edge_rates(const Matrix& truth, const Matrix& est);

// Aligns est to truth, then averages the losses and edge rates over grid
// points (losses summed over mixtures, rates averaged over mixtures).
EvalReport report(const MixtureParams& est, const MixtureParams& truth);

// Permutation carrying the mixtures at grid point g to those at g+1 by
// minimum Frobenius distance; result[k] is the mixture at g+1 matched to k.
std::vector<Index> adjacent_alignment(const MixtureParams& est, Index g);

// Fraction of adjacent grid transitions whose alignment is the identity.
double adjacent_identity_rate(const MixtureParams& est);

}  // namespace npmix
