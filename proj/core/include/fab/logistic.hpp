#pragma once

#include <Eigen/Core>

namespace fab {

struct GlmFit {
    Eigen::VectorXd theta_hat;
    Eigen::MatrixXd sigma_hat; // n * (observed information)^{-1}
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
};

struct LogisticOptions {
    double score_tol = 1e-10;    // absolute bound on the max score entry
    int max_iter = 100;
    int max_halvings = 20;       // step-halving guard on each Newton step
    double separation_norm = 30; // ||theta|| beyond this flags separation
};

// Convergence: max |score| below score_tol, or a floating-point plateau
// (step-halving cannot improve the log-likelihood and the Newton decrement
// shows nothing left to gain).

// Logistic regression MLE by Newton-Raphson (IRLS) from theta = 0, with
// step-halving so the log-likelihood increases at every accepted step.
// sigma_hat = n (X^T W X)^{-1} at the optimum.
//
// Throws SeparationError when the iterates diverge (perfectly separable
// data) and RankError when the weighted Gram matrix is singular.
GlmFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const LogisticOptions& opts = {});

} // namespace fab
