#include "fab/pvalue.hpp"

#include "fab/normal.hpp"
#include "fab/root_finding.hpp"
#include "fab/student_t.hpp"

#include <limits>
#include <stdexcept>

namespace fab {

namespace {
constexpr double kOneSidedCutoff = 40.0;
}

double fab_shift(const GuessParams& g) {
    if (!(g.sigma > 0.0)) throw std::domain_error("fab_shift: sigma must be positive");
    if (!(g.tau2 > 0.0)) throw std::domain_error("fab_shift: tau2 must be positive");
    if (std::isinf(g.tau2)) return 0.0;
    return 2.0 * g.mu * g.sigma / g.tau2;
}

double fab_p_normal(double z, double b) {
    if (!std::isfinite(z)) throw std::domain_error("fab_p_normal: statistic must be finite");
    if (std::isnan(b)) throw std::domain_error("fab_p_normal: shift is NaN");
    if (b > kOneSidedCutoff) return norm_sf(z);
    if (b < -kOneSidedCutoff) return norm_cdf(z);
    if (z + 0.5 * b >= 0.0) return norm_sf(z + b) + norm_sf(z);
    return norm_cdf(z) + norm_cdf(z + b);
}

double fab_p_student_t(double t, double b, double nu) {
    if (!std::isfinite(t)) throw std::domain_error("fab_p_student_t: statistic must be finite");
    if (std::isnan(b)) throw std::domain_error("fab_p_student_t: shift is NaN");
    if (std::isinf(b)) return b > 0 ? student_t_sf(t, nu) : student_t_cdf(t, nu);
    if (t + 0.5 * b >= 0.0) return student_t_sf(t + b, nu) + student_t_sf(t, nu);
    return student_t_cdf(t, nu) + student_t_cdf(t + b, nu);
}

double fab_threshold(const GuessParams& g, double alpha) {
    if (!(g.sigma > 0.0)) throw std::domain_error("fab_threshold: sigma must be positive");
    if (!(g.tau2 > 0.0)) throw std::domain_error("fab_threshold: tau2 must be positive");
    if (!(alpha > 0.0) || alpha > 1.0) throw std::domain_error("fab_threshold: alpha must be in (0, 1]");
    if (alpha == 1.0) return 0.0;

    const double k = std::isinf(g.tau2) ? 0.0 : g.mu * g.sigma / g.tau2;
    const auto eq = [&](double c) {
        const double t = c / g.sigma;
        return 0.5 * (norm_cdf(t + k) + norm_cdf(t - k)) - (1.0 - 0.5 * alpha);
    };
    double hi = g.sigma * (1.0 + std::fabs(k));
    while (eq(hi) < 0.0) hi *= 2.0;
    return find_root_bracketed(eq, 0.0, hi, 1e-12 * std::max(1.0, g.sigma)).x;
}

AltRoots alt_roots(double u, double b) {
    if (!(u > 0.0) || !(u < 1.0)) throw std::domain_error("alt_roots: u must be in (0, 1)");
    if (!std::isfinite(b)) throw std::domain_error("alt_roots: shift must be finite");

    // p(z, b) decreases from 1 to 0 on (-b/2, infinity); z_l mirrors z_h
    // across the symmetry point -b/2, which solves its equation exactly.
    const double mid = -0.5 * b;
    const auto eq = [&](double z) { return fab_p_normal(z, b) - u; };
    double hi = mid + std::fabs(b) + 10.0;
    while (eq(hi) > 0.0) hi += 10.0;
    double z_h = find_root_bracketed(eq, mid, hi, 1e-10).x;
    if (z_h <= mid) z_h = std::nextafter(mid, std::numeric_limits<double>::infinity());
    return {-b - z_h, z_h, u};
}

double alt_cdf(double u, double theta, double b) {
    const AltRoots r = alt_roots(u, b);
    return norm_cdf(r.z_l - theta) + norm_sf(r.z_h - theta);
}

double alt_pdf(double u, double theta, double b) {
    const AltRoots r = alt_roots(u, b);
    const double lo = norm_pdf(r.z_l - theta) / (norm_pdf(-r.z_l) + norm_pdf(r.z_l + b));
    const double hi = norm_pdf(r.z_h - theta) / (norm_pdf(-r.z_h) + norm_pdf(r.z_h + b));
    return lo + hi;
}

} // namespace fab
