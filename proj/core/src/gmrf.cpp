#include "fab/gmrf.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fab {

Eigen::VectorXd SymTridiag::multiply(const Eigen::VectorXd& x) const {
    const int n = size();
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) {
        double v = diag(i) * x(i);
        if (i > 0) v += off(i - 1) * x(i - 1);
        if (i + 1 < n) v += off(i) * x(i + 1);
        out(i) = v;
    }
    return out;
}

TridiagLdlt::TridiagLdlt(const SymTridiag& t) {
    const int n = t.size();
    d_.resize(n);
    l_.resize(n > 0 ? n - 1 : 0);
    pd_ = true;
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
        double di = t.diag(i);
        if (i > 0) di -= l_(i - 1) * l_(i - 1) * prev;
        if (!(di > 0.0) || !std::isfinite(di)) {
            pd_ = false;
            return;
        }
        d_(i) = di;
        if (i + 1 < n) l_(i) = t.off(i) / di;
        prev = di;
    }
}

double TridiagLdlt::log_det() const {
    return d_.array().log().sum();
}

Eigen::VectorXd TridiagLdlt::solve(const Eigen::VectorXd& rhs) const {
    const int n = static_cast<int>(d_.size());
    Eigen::VectorXd x = rhs;
    for (int i = 1; i < n; ++i) x(i) -= l_(i - 1) * x(i - 1);
    for (int i = 0; i < n; ++i) x(i) /= d_(i);
    for (int i = n - 2; i >= 0; --i) x(i) -= l_(i) * x(i + 1);
    return x;
}

double TridiagLdlt::inverse_diag(int j) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d_.size());
    e(j) = 1.0;
    return solve(e)(j);
}

SymTridiag car_precision(int p, double beta1, double tau2) {
    SymTridiag q;
    q.diag = Eigen::VectorXd::Constant(p, 1.0 / tau2);
    q.off = Eigen::VectorXd::Constant(p > 0 ? p - 1 : 0, -beta1 / tau2);
    return q;
}

Eigen::MatrixXd car_covariance(int p, double beta1, double tau2) {
    if (!(std::fabs(beta1) < 0.5)) throw std::domain_error("car_covariance: |beta1| must be < 1/2");
    if (!(tau2 > 0.0)) throw std::domain_error("car_covariance: tau2 must be positive");
    Eigen::MatrixXd k = Eigen::MatrixXd::Identity(p, p);
    for (int i = 0; i + 1 < p; ++i) {
        k(i, i + 1) = -beta1;
        k(i + 1, i) = -beta1;
    }
    Eigen::MatrixXd cov = tau2 * k.inverse();
    return 0.5 * (cov + cov.transpose());
}

double car_marginal_loglik(const CarParams& params, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& sigma2, const std::vector<bool>& observed) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    const int p = static_cast<int>(y.size());
    if (static_cast<int>(observed.size()) != p || sigma2.size() != p)
        throw std::invalid_argument("car_marginal_loglik: dimension mismatch");
    if (!(params.tau2 > 0.0) || !(std::fabs(params.beta1) < 0.5)) return neg_inf;

    const SymTridiag q_prior = car_precision(p, params.beta1, params.tau2);
    TridiagLdlt prior(q_prior);
    if (!prior.positive_definite()) return neg_inf;

    SymTridiag q_post = q_prior;
    int n_obs = 0;
    for (int i = 0; i < p; ++i) {
        if (observed[i]) {
            q_post.diag(i) += 1.0 / sigma2(i);
            ++n_obs;
        }
    }
    if (n_obs == 0) return 0.0;
    TridiagLdlt post(q_post);
    if (!post.positive_definite()) return neg_inf;

    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(p, params.mu);
    Eigen::VectorXd rhs = q_prior.multiply(mu);
    for (int i = 0; i < p; ++i) {
        if (observed[i]) rhs(i) += y(i) / sigma2(i);
    }
    const Eigen::VectorXd mode = post.solve(rhs);

    const Eigen::VectorXd dm = mode - mu;
    double ll = 0.5 * (prior.log_det() - post.log_det());
    ll -= 0.5 * dm.dot(q_prior.multiply(dm));
    for (int i = 0; i < p; ++i) {
        if (!observed[i]) continue;
        const double r = y(i) - mode(i);
        ll -= 0.5 * (std::log(2.0 * M_PI * sigma2(i)) + r * r / sigma2(i));
    }
    return ll;
}

std::pair<double, double> car_conditional_moments(const CarParams& params, const Eigen::VectorXd& y,
                                                  const Eigen::VectorXd& sigma2, int j) {
    const int p = static_cast<int>(y.size());
    if (j < 0 || j >= p) throw std::out_of_range("car_conditional_moments: index out of range");

    const SymTridiag q_prior = car_precision(p, params.beta1, params.tau2);
    SymTridiag q_post = q_prior;
    for (int i = 0; i < p; ++i) {
        if (i != j) q_post.diag(i) += 1.0 / sigma2(i);
    }
    TridiagLdlt post(q_post);
    if (!post.positive_definite())
        throw std::domain_error("car_conditional_moments: posterior precision not PD");

    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(p, params.mu);
    Eigen::VectorXd rhs = q_prior.multiply(mu);
    for (int i = 0; i < p; ++i) {
        if (i != j) rhs(i) += y(i) / sigma2(i);
    }
    const double m_j = post.solve(rhs)(j);
    const double v_jj = post.inverse_diag(j);
    return {m_j, v_jj};
}

} // namespace fab
