#pragma once

#include <Eigen/Dense>

#include <optional>

#include "npmix/errors.hpp"

namespace npmix {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Lower-triangular factor L with L * L^T equal to the source matrix.
struct CholeskyFactor {
    Matrix lower;

    Index dim() const { return lower.rows(); }
    double log_det() const;
    // Solves (L L^T) x = b.
    Vector solve(const Vector& b) const;
    Matrix inverse() const;
    Matrix reconstruct() const;
};

// Relative pivot threshold below which a matrix is declared indefinite.
inline constexpr double kPivotTolerance = 1e-12;

// Throws NotPositiveDefinite(pivot) when a pivot falls to or below
// kPivotTolerance times the largest diagonal entry.
CholeskyFactor cholesky(const Matrix& m);
std::optional<CholeskyFactor> try_cholesky(const Matrix& m);

double log_det(const Matrix& m);

// Largest absolute eigenvalue of a symmetric matrix by power iteration.
double spectral_norm(const Matrix& m, double tol = 1e-9, int max_iter = 10000);

Vector solve_spd(const Matrix& m, const Vector& b);
Matrix invert_spd(const Matrix& m);

// (m + m^T) / 2, which is exactly symmetric.
Matrix symmetrize(const Matrix& m);

// Adds eps * I repeatedly (eps = rel * mean diagonal, doubling) until the
// matrix admits a Cholesky factor. Returns the repaired matrix.
Matrix jitter_until_pd(const Matrix& m, double rel);

}  // namespace npmix
