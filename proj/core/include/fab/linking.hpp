#pragma once

#include "fab/gmrf.hpp"
#include "fab/indirect.hpp"

#include <limits>
#include <optional>
#include <string>
#include <variant>

namespace fab {

// Linking model families theta ~ N(mu_gamma, Psi_gamma).

// theta_j iid N(mu, tau2). tau2 = +infinity is the diffuse case: every
// downstream shift is exactly zero.
struct Exchangeable {
    double mu = 0.0;
    double tau2 = std::numeric_limits<double>::infinity();
};

// theta ~ N(X beta, tau2 I) with known per-coordinate covariates.
struct RegressionLink {
    Matrix X; // p x q
    Vector beta;
    double tau2 = 1.0;
};

// Path-graph conditional autoregression; see gmrf.hpp. The intercept of the
// conditional law is derived, beta0 = mu (1 - 2 beta1) at interior nodes,
// so the joint mean stays stationary at mu.
struct CarPathLink {
    CarParams par;
};

// Mixture of N(mu, tau2) and a point mass at zero with slab weight w.
// The optimal test only sees the slab moments, so downstream code treats
// this as N(mu, tau2); w is reported for diagnostics.
struct SpikeSlabLink {
    double mu = 0.0;
    double tau2 = 1.0;
    double w = 1.0;
};

using LinkingSpec = std::variant<Exchangeable, RegressionLink, CarPathLink, SpikeSlabLink>;

bool is_diffuse(const LinkingSpec& spec);

struct LinkingMoments {
    Vector mu;
    Matrix psi;
};
// (mu_gamma, Psi_gamma) as dense p-dimensional moments. SpikeSlab returns
// the slab component only. CarPath with |beta1| >= 1/2 is invalid.
LinkingMoments linking_moments(const LinkingSpec& spec, int p);

// Family selector for fitting: the structure of the linking model with its
// parameters left free.
struct LinkingFamily {
    enum class Kind { Exchangeable, Regression, CarPath, SpikeSlab };
    Kind kind = Kind::Exchangeable;
    Matrix X; // Regression only

    static LinkingFamily exchangeable() { return {Kind::Exchangeable, {}}; }
    static LinkingFamily regression(Matrix x) { return {Kind::Regression, std::move(x)}; }
    static LinkingFamily car_path() { return {Kind::CarPath, {}}; }
    static LinkingFamily spike_slab() { return {Kind::SpikeSlab, {}}; }
};

std::string family_name(LinkingFamily::Kind kind);

struct FitOptions {
    int n_starts = 3;                 // method-of-moments, diffuse, shrunk
    double ftol = 1e-9;               // simplex objective range at convergence
    int max_iter = 0;                 // 0 -> optimizer default
    std::optional<double> fixed_tau2; // hold tau2 at this value
    double variance_floor_rel = 1e-8; // floor on tau2/sigma2 relative to the squared data scale
};

struct FittedLinking {
    LinkingSpec spec;              // family with fitted values plugged in
    std::optional<double> sigma2;  // fitted sampling scale, when estimated
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int n_restarts_used = 0;
    bool at_variance_floor = false;

    Vector gamma() const; // flat parameter vector in family order
};

// Exact Gaussian log density of x = G^T y under
//   G^T y ~ N(G^T mu_gamma, G^T [Sigma + Psi_gamma] G).
// KnownCorrelation covariances need the scale through `sigma2`.
// Returns -infinity when the covariance is not positive definite.
double marginal_loglik(const LinkingSpec& spec, std::optional<double> sigma2, const Vector& x,
                       const Basis& basis, const CovModel& cov);

// Marginal maximum likelihood over the family's free parameters.
// Nelder-Mead on a transformed domain (log variances, atanh(2 beta1)) with
// linear mean parameters profiled out by generalized least squares;
// multi-start, best fit wins. SpikeSlab families are fitted by
// fit_spike_slab instead.
FittedLinking fit_marginal_ml(const LinkingFamily& family, const Vector& x, const Basis& basis,
                              const CovModel& cov, const FitOptions& opts = {});

// Fay-Herriot fit with a common within-group variance:
//   ybar_k ~ N(x_k^T beta, sigma2/n_k + tau2),
//   (n_k - 1) s2_k / sigma2 ~ chi^2_{n_k - 1},
// jointly over the groups not listed in `exclude`. beta is profiled by GLS;
// (tau2, sigma2) are maximized numerically. Returns a RegressionLink spec
// plus the fitted sigma2.
FittedLinking fit_fay_herriot(const Vector& ybar, const Vector& s2, const Vector& n,
                              const Matrix& X, const std::vector<int>& exclude,
                              const FitOptions& opts = {});

// Two-component EM for the spike-and-slab marginal
//   w N(mu, tau2 + scale_k^2) + (1 - w) N(0, scale_k^2)
// over approximately independent pseudo-observations. The log-likelihood is
// monotone over iterations; a decrease beyond 1e-8 aborts (bug trap).
FittedLinking fit_spike_slab(const Vector& theta, const Vector& scales,
                             const FitOptions& opts = {});

} // namespace fab
