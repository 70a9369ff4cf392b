#pragma once

#include "fab/tridiagonal.hpp"

#include <Eigen/Core>

#include <vector>

namespace fab {

// Conditional autoregression on a path graph: theta ~ N(mu 1, Psi) with
// precision Psi^{-1} = (I - beta1 A)/tau2, A the path adjacency matrix.
// The implied full conditional of an interior coordinate is
// N(mu(1 - 2 beta1) + beta1 (theta_{j-1} + theta_{j+1}), tau2).
// Positive definite for all p when |beta1| < 1/2.
struct CarParams {
    double mu = 0.0;
    double beta1 = 0.0;
    double tau2 = 1.0;
};

// (I - beta1 A) / tau2 as a symmetric tridiagonal matrix.
SymTridiag car_precision(int p, double beta1, double tau2);

// Dense covariance tau2 (I - beta1 A)^{-1}; small p only.
Eigen::MatrixXd car_covariance(int p, double beta1, double tau2);

// Marginal log-likelihood of the observed entries of y under
// y_k = theta_k + e_k, e_k ~ N(0, sigma2_k), theta ~ CAR(mu, beta1, tau2).
// Unobserved coordinates are integrated out exactly. O(p) per call:
// the Gaussian identity  log p(y_obs) = log p(theta*) + log p(y_obs | theta*)
// - log p(theta* | y_obs)  at the posterior mode theta* needs only
// tridiagonal factorizations. Returns -infinity when not positive definite.
double car_marginal_loglik(const CarParams& params, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& sigma2, const std::vector<bool>& observed);

// Conditional mean and variance of theta_j given all observations except j.
std::pair<double, double> car_conditional_moments(const CarParams& params, const Eigen::VectorXd& y,
                                                  const Eigen::VectorXd& sigma2, int j);

} // namespace fab
