#pragma once

#include <cmath>
#include <limits>

namespace fab {

// Prior guess about one mean parameter: theta ~ N(mu, tau2), direct estimate
// scale sigma. tau2 = +infinity encodes the diffuse (UMPU) case.
struct GuessParams {
    double mu = 0.0;
    double tau2 = std::numeric_limits<double>::infinity();
    double sigma = 1.0;
};

// The two statistic values at which the p-value function equals u.
// z_l < -b/2 < z_h; each solves its defining tail equation.
struct AltRoots {
    double z_l = 0.0;
    double z_h = 0.0;
    double u = 0.0;
};

// Shift implied by a prior guess: b = 2 mu sigma / tau2 (0 when diffuse).
double fab_shift(const GuessParams& g);

// p(z, b) = 1 - |Phi(z + b) - Phi(-z)|, evaluated on the branch chosen by
// sign(z + b/2) with complementary CDFs so both tails keep relative
// accuracy. b = +/-infinity (or |b| > 40, where the difference is below
// machine epsilon) yields the one-sided limits 1 - Phi(z) and Phi(z).
double fab_p_normal(double z, double b);

// Same p-value with the t_nu null distribution (nu >= 1): the recommended
// p-value when the scale is estimated. Evaluated through the t survival
// function, which is exact for any finite b.
double fab_p_student_t(double t, double b, double nu);

// Generic form for any continuous CDF symmetric about zero. Prefer
// fab_p_student_t for the t family; this template evaluates the raw
// expression and inherits whatever tail accuracy the callable provides.
template <class Cdf>
double fab_p_symmetric(double t, double b, Cdf&& cdf) {
    return 1.0 - std::fabs(cdf(t + b) - cdf(-t));
}

// Rejection threshold c >= 0 of the level-alpha test that rejects when
// |Y + mu sigma^2/tau2| > c, i.e. the solution of
// [Phi(c/sigma + k) + Phi(c/sigma - k)]/2 = 1 - alpha/2 with k = mu sigma/tau2.
double fab_threshold(const GuessParams& g, double alpha);

// Roots of p(z, b) = u (0 < u < 1, b finite), solved to 1e-10 in z.
AltRoots alt_roots(double u, double b);

// CDF of U = p(Z, b) when Z ~ N(theta, 1): Phi(z_l - theta) + 1 - Phi(z_h - theta).
// alt_cdf(alpha, theta, b) is the power of the level-alpha test at theta.
double alt_cdf(double u, double theta, double b);

// Density of U = p(Z, b) under Z ~ N(theta, 1), by implicit differentiation
// of the root equations.
double alt_pdf(double u, double theta, double b);

} // namespace fab
