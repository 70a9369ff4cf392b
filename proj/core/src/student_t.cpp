#include "fab/student_t.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fab {

namespace {

// Continued fraction for the incomplete beta function (Lentz's method).
double beta_cont_frac(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;

    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;

    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace

double reg_inc_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: a, b must be positive");
    if (std::isnan(x)) throw std::domain_error("reg_inc_beta: x is NaN");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cont_frac(a, b, x) / a;
    }
    return 1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double nu) {
    if (!(nu >= 1.0)) throw std::domain_error("student_t: degrees of freedom must be >= 1");
    if (std::isnan(t)) throw std::domain_error("student_t: statistic is NaN");
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const double x = nu / (nu + t * t);
    const double tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, x);
    return t >= 0.0 ? tail : 1.0 - tail;
}

double student_t_cdf(double t, double nu) { return student_t_sf(-t, nu); }

double student_t_pdf(double t, double nu) {
    if (!(nu >= 1.0)) throw std::domain_error("student_t: degrees of freedom must be >= 1");
    const double ln = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                      0.5 * std::log(nu * M_PI) -
                      0.5 * (nu + 1.0) * std::log1p(t * t / nu);
    return std::exp(ln);
}

} // namespace fab
