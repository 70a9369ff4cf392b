#pragma once

#include <Eigen/Core>

#include <optional>
#include <variant>
#include <vector>

namespace fab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// What is known about the covariance of the direct-estimate vector.
struct DiagonalKnown {
    Vector sigma2; // per-coordinate variances
};
struct FullKnown {
    Matrix sigma;
};
// Sigma = sigma2 * omega with the scalar sigma2 unknown (regression case).
struct KnownCorrelation {
    Matrix omega;
};
// Consistent estimate of the covariance of sqrt(n) * theta_hat.
struct EstimatedCov {
    Matrix sigma_hat;
    double n = 0.0;
};
using CovModel = std::variant<DiagonalKnown, FullKnown, KnownCorrelation, EstimatedCov>;

int cov_dim(const CovModel& cov);
// Dense covariance matrix; KnownCorrelation requires the scale factor.
Matrix cov_matrix(const CovModel& cov, std::optional<double> sigma2 = std::nullopt);

// p x k matrix with orthonormal columns spanning a null space that
// decorrelates the target coordinate(s) from the projection G^T y.
//
// When `coordinate_basis` is set, G is the identity with the `dropped`
// columns removed and project() drops coordinates exactly (no
// floating-point arithmetic).
struct Basis {
    Matrix G;
    std::vector<int> dropped; // sorted
    int target = -1;          // the tested coordinate this basis excludes
    bool coordinate_basis = false;

    int rows() const { return static_cast<int>(G.rows()); }
    int cols() const { return static_cast<int>(G.cols()); }
    Vector project(const Vector& y) const;
    Matrix project_columns(const Matrix& m) const; // G^T m
};

// Identity with column j removed; valid whenever Sigma is diagonal.
Basis delete_column_basis(int p, int j);
// Identity with a set of columns removed (blocked estimation).
Basis delete_columns_basis(int p, const std::vector<int>& js);
// Full identity: no exclusion (shared estimation uses the whole vector).
Basis identity_basis(int p);

// Orthonormal basis of the null space of s, built by Gram-Schmidt over
// (s, e_1, ..., e_p skipping e_j) in that order, discarding the normalized
// s direction. Each column is sign-normalized to a positive leading entry,
// making the result unique and bit-for-bit deterministic.
Basis nullspace_basis(const Vector& s, int j);
// Null space of several columns at once (blocked estimation with a dense
// covariance): S holds the vectors to annihilate, js their coordinates.
Basis nullspace_basis(const Matrix& s_cols, const std::vector<int>& js);

// Conditional moments of theta given G^T y under theta ~ N(mu, psi),
// y | theta ~ N(theta, sigma). Uses the form
//   V = psi - psi G [G^T (psi + sigma) G]^{-1} G^T psi
// with one Cholesky of the inner matrix; a single jitter retry separates
// conditioning failures from modeling errors.
struct IndirectMoments {
    Vector m;
    Matrix V;
    double m_target = 0.0; // m_j
    double v_target = 0.0; // v_jj
    double shift = 0.0;    // b = 2 m_j sigma_j / v_jj
};
IndirectMoments conditional_moments(const Vector& mu, const Matrix& psi, const Matrix& sigma,
                                    const Basis& basis, const Vector& y);
// Same computation from the projected data x = G^T y directly; the direct
// coordinate never enters, which is what the exact mode relies on.
IndirectMoments conditional_moments_projected(const Vector& mu, const Matrix& psi,
                                              const Matrix& sigma, const Basis& basis,
                                              const Vector& x_proj);

} // namespace fab
