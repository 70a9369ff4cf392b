#include "fab/logistic.hpp"

#include "fab/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>

namespace fab {

namespace {

double logistic_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    // sum y_i eta_i - log(1 + exp(eta_i)), with the softplus split for
    // large |eta|.
    double ll = 0.0;
    for (int i = 0; i < eta.size(); ++i) {
        const double e = eta(i);
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y(i) * e - softplus;
    }
    return ll;
}

} // namespace

GlmFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const LogisticOptions& opts) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (y.size() != n) throw std::invalid_argument("fit_logistic: dimension mismatch");
    if (n <= p) throw std::invalid_argument("fit_logistic: needs more observations than parameters");
    for (int i = 0; i < n; ++i) {
        if (y(i) != 0.0 && y(i) != 1.0)
            throw std::invalid_argument("fit_logistic: responses must be 0 or 1");
    }

    GlmFit fit;
    fit.theta_hat = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    double ll = logistic_loglik(eta, y);
    const double tol = opts.score_tol;

    Eigen::MatrixXd hessian(p, p);
    for (int it = 0; it < opts.max_iter; ++it) {
        fit.iterations = it + 1;
        const Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
        const Eigen::VectorXd score = x.transpose() * (y - prob);
        if (score.lpNorm<Eigen::Infinity>() < tol) {
            fit.converged = true;
            fit.iterations = it;
            break;
        }
        const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
        hessian = x.transpose() * w.asDiagonal() * x;
        Eigen::LLT<Eigen::MatrixXd> llt(hessian);
        if (llt.info() != Eigen::Success)
            throw RankError("fit_logistic: weighted Gram matrix is singular");
        Eigen::VectorXd step = llt.solve(score);
        // Newton decrement: the remaining log-likelihood improvement is
        // about half this value.
        const double decrement = score.dot(step);

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h < opts.max_halvings; ++h, scale *= 0.5) {
            const Eigen::VectorXd cand = fit.theta_hat + scale * step;
            const Eigen::VectorXd eta_cand = x * cand;
            const double ll_cand = logistic_loglik(eta_cand, y);
            if (ll_cand > ll) {
                fit.theta_hat = cand;
                eta = eta_cand;
                ll = ll_cand;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // Step-halving stalled: accept if the remaining improvement is
            // below the floating-point resolution of the log-likelihood.
            fit.converged = decrement <= 1e-9 * (1.0 + std::fabs(ll));
            break;
        }
        if (fit.theta_hat.norm() > opts.separation_norm)
            throw SeparationError("fit_logistic: estimates diverging, data look separable");
    }
    fit.loglik = ll;

    if (!fit.converged) {
        // Ran out of iterations: accept only a floating-point plateau.
        const Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
        const Eigen::VectorXd score = x.transpose() * (y - prob);
        const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
        hessian = x.transpose() * w.asDiagonal() * x;
        Eigen::LLT<Eigen::MatrixXd> llt(hessian);
        const double decrement =
            llt.info() == Eigen::Success ? score.dot(llt.solve(score)) : 1.0;
        if (decrement > 1e-9 * (1.0 + std::fabs(ll)))
            throw SeparationError("fit_logistic: did not converge, data look separable");
        fit.converged = true;
    }

    const Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
    const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    hessian = x.transpose() * w.asDiagonal() * x;
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success)
        throw RankError("fit_logistic: observed information is singular at the optimum");
    fit.sigma_hat = n * llt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.sigma_hat = 0.5 * (fit.sigma_hat + fit.sigma_hat.transpose());
    return fit;
}

} // namespace fab
