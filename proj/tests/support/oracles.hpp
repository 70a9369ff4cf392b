#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

// Independent reference implementations used only by the tests. These stay
// deliberately naive: straight quadrature, dense block inversion, brute-force
// enumeration.
namespace oracles {

// Adaptive Simpson quadrature.
inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int depth = 40) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
}

// Standard normal CDF through the library-independent erf half.
inline double normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

// t CDF by quadrature of the density from 0 to |t| (plus 1/2).
inline double t_cdf_quadrature(double t, double nu) {
    const auto pdf = [nu](double x) {
        return std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                        0.5 * std::log(nu * M_PI) - 0.5 * (nu + 1.0) * std::log1p(x * x / nu));
    };
    const double half = integrate(pdf, 0.0, std::fabs(t), 1e-13);
    return t >= 0.0 ? 0.5 + half : 0.5 - half;
}

// Closed forms for nu = 1 (Cauchy) and nu = 2.
inline double t_cdf_nu1(double t) { return 0.5 + std::atan(t) / M_PI; }
inline double t_cdf_nu2(double t) { return 0.5 + 0.5 * t / std::sqrt(2.0 + t * t); }

// Dense multivariate normal log density.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov) {
    const int k = static_cast<int>(x.size());
    const Eigen::MatrixXd inv = cov.inverse();
    const double det = cov.determinant();
    const Eigen::VectorXd r = x - mean;
    return -0.5 * (k * std::log(2.0 * M_PI) + std::log(det) + r.dot(inv * r));
}

// Conditional moments of the first block of a joint Gaussian given the
// second block, by explicit block inversion.
struct ConditionalGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};
inline ConditionalGaussian condition_on_block(const Eigen::VectorXd& mean1,
                                              const Eigen::VectorXd& mean2,
                                              const Eigen::MatrixXd& cov11,
                                              const Eigen::MatrixXd& cov12,
                                              const Eigen::MatrixXd& cov22,
                                              const Eigen::VectorXd& observed2) {
    const Eigen::MatrixXd inv22 = cov22.inverse();
    ConditionalGaussian out;
    out.mean = mean1 + cov12 * inv22 * (observed2 - mean2);
    out.cov = cov11 - cov12 * inv22 * cov12.transpose();
    return out;
}

// Brute-force Benjamini-Hochberg: try every cutoff.
inline std::vector<int> bh_brute_force(const std::vector<double>& pvals, double q) {
    const int m = static_cast<int>(pvals.size());
    std::vector<double> sorted(pvals);
    std::sort(sorted.begin(), sorted.end());
    double threshold = 0.0;
    for (int i = m; i >= 1; --i) {
        if (sorted[i - 1] <= q * i / m) {
            threshold = sorted[i - 1];
            break;
        }
    }
    std::vector<int> rejected;
    for (int j = 0; j < m; ++j) {
        if (threshold > 0.0 && pvals[j] <= threshold) rejected.push_back(j);
    }
    return rejected;
}

// Centered finite difference.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

} // namespace oracles
