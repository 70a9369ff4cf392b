#pragma once

#include <Eigen/Core>

namespace fab {

// Symmetric tridiagonal matrix: diag has size n, off has size n-1.
struct SymTridiag {
    Eigen::VectorXd diag;
    Eigen::VectorXd off;

    int size() const { return static_cast<int>(diag.size()); }
    Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
};

// LDL^T factorization of a symmetric tridiagonal matrix. O(n) to factor,
// solve, and take the log-determinant. positive_definite() is false when a
// pivot is not strictly positive; the other accessors are then meaningless.
class TridiagLdlt {
  public:
    explicit TridiagLdlt(const SymTridiag& t);

    bool positive_definite() const { return pd_; }
    double log_det() const;
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    // j-th diagonal entry of the inverse.
    double inverse_diag(int j) const;

  private:
    Eigen::VectorXd d_;
    Eigen::VectorXd l_;
    bool pd_ = false;
};

} // namespace fab
