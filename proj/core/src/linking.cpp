#include "fab/linking.hpp"

#include "fab/errors.hpp"
#include "fab/nelder_mead.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.83787706640934548356;

double sample_mean(const Vector& x) { return x.size() > 0 ? x.mean() : 0.0; }

double sample_var(const Vector& x) {
    const int k = static_cast<int>(x.size());
    if (k < 2) return 0.0;
    const double m = x.mean();
    return (x.array() - m).square().sum() / (k - 1);
}

// tau2 = floor + exp(t), smooth and bounded below.
struct VarTransform {
    double floor = 0.0;
    double value(double t) const { return floor + std::exp(std::min(t, 700.0)); }
    double param(double v) const { return std::log(std::max(v - floor, 1e-300)); }
};

struct StartPoint {
    Vector x;
};

struct MultiStartResult {
    Vector x;
    double fmin = std::numeric_limits<double>::infinity();
    bool converged = false;
    int starts_used = 0;
};

template <class F>
MultiStartResult run_multistart(F&& objective, const std::vector<StartPoint>& starts,
                                const FitOptions& opts) {
    MultiStartResult best;
    SimplexOptions nm;
    nm.ftol = opts.ftol;
    nm.max_iter = opts.max_iter;
    for (const auto& s : starts) {
        ++best.starts_used;
        if (s.x.size() == 0) {
            // Nothing free to optimize; evaluate directly.
            const double f = objective(s.x);
            if (f < best.fmin) {
                best.fmin = f;
                best.x = s.x;
                best.converged = true;
            }
            continue;
        }
        SimplexResult r = nelder_mead(objective, s.x, nm);
        if (r.fmin < best.fmin) {
            best.fmin = r.fmin;
            best.x = r.x;
            best.converged = r.converged;
        }
    }
    if (!std::isfinite(best.fmin))
        throw FitError("fit_marginal_ml: every start point was infeasible");
    return best;
}

// Marginal model for Psi = tau2 I linking families after projection:
//   x ~ N(Z theta_mean, c * S + tau2 I)
// diagonalized once so each likelihood evaluation is O(k). The linear mean
// parameters are profiled out by GLS.
struct DiagonalizedMarginal {
    Vector lam;  // eigenvalues of G^T S G (or the kept variances directly)
    Vector xr;   // rotated data
    Matrix zr;   // rotated mean design
    bool c_free = false;
    double data_var = 0.0;
    double lam_mean = 0.0;

    struct Eval {
        double loglik = kNegInf;
        Vector beta;
    };

    Eval eval(double tau2, double c) const {
        Eval out;
        const int k = static_cast<int>(xr.size());
        Vector d = (c * lam.array() + tau2).matrix();
        if ((d.array() <= 0.0).any()) return out;
        const Vector w = d.cwiseInverse();
        Matrix a = zr.transpose() * w.asDiagonal() * zr;
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success) return out;
        out.beta = llt.solve(zr.transpose() * (w.asDiagonal() * xr));
        const Vector r = xr - zr * out.beta;
        double ll = -0.5 * k * kLog2Pi;
        ll -= 0.5 * d.array().log().sum();
        ll -= 0.5 * (r.array().square() * w.array()).sum();
        out.loglik = ll;
        return out;
    }
};

DiagonalizedMarginal prepare_marginal(const Matrix& z_full, const Vector& x, const Basis& basis,
                                      const CovModel& cov) {
    const int p = basis.rows();
    if (z_full.rows() != p) throw std::invalid_argument("fit_marginal_ml: design dimension mismatch");
    DiagonalizedMarginal m;
    m.data_var = std::max(sample_var(x), 1e-12 * (1.0 + x.squaredNorm() / std::max<int>(1, x.size())));

    const auto* diag = std::get_if<DiagonalKnown>(&cov);
    if (diag != nullptr && basis.coordinate_basis) {
        m.lam = basis.project(diag->sigma2);
        m.xr = x;
        m.zr = basis.project_columns(z_full);
    } else {
        Matrix s0;
        if (diag != nullptr) s0 = diag->sigma2.asDiagonal();
        else if (const auto* f = std::get_if<FullKnown>(&cov)) s0 = f->sigma;
        else if (const auto* kc = std::get_if<KnownCorrelation>(&cov)) {
            s0 = kc->omega;
            m.c_free = true;
        } else s0 = std::get<EstimatedCov>(cov).sigma_hat;

        Matrix s_proj = basis.project_columns(basis.project_columns(s0).transpose());
        s_proj = 0.5 * (s_proj + s_proj.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> eig(s_proj);
        if (eig.info() != Eigen::Success)
            throw ConditioningError("fit_marginal_ml: eigendecomposition failed");
        m.lam = eig.eigenvalues().cwiseMax(0.0);
        m.xr = eig.eigenvectors().transpose() * x;
        m.zr = eig.eigenvectors().transpose() * basis.project_columns(z_full);
    }
    m.lam_mean = m.lam.size() > 0 ? m.lam.mean() : 0.0;

    Eigen::ColPivHouseholderQR<Matrix> qr(m.zr);
    qr.setThreshold(1e-10);
    if (qr.rank() < m.zr.cols())
        throw RankError("fit_marginal_ml: projected mean design is rank deficient");
    return m;
}

FittedLinking fit_tau_family(const LinkingFamily& family, const Vector& x, const Basis& basis,
                             const CovModel& cov, const FitOptions& opts) {
    const int p = basis.rows();
    const Matrix z_full = family.kind == LinkingFamily::Kind::Regression
                              ? family.X
                              : Matrix(Matrix::Ones(p, 1));
    const DiagonalizedMarginal m = prepare_marginal(z_full, x, basis, cov);

    const int q = static_cast<int>(m.zr.cols());
    const int free_params = (opts.fixed_tau2 ? 0 : 1) + (m.c_free ? 1 : 0);
    if (static_cast<int>(x.size()) < q + free_params)
        throw FitError("fit_marginal_ml: fewer observations than free parameters");

    VarTransform tau_tr{opts.variance_floor_rel * m.data_var};
    VarTransform c_tr{opts.variance_floor_rel * m.data_var / std::max(m.lam_mean, 1e-300)};

    // OLS residual variance drives the start points.
    double vhat = m.data_var;
    {
        Eigen::ColPivHouseholderQR<Matrix> qr(m.zr);
        const Vector r = m.xr - m.zr * qr.solve(m.xr);
        const int dof = std::max<int>(1, static_cast<int>(m.xr.size()) - q);
        vhat = std::max(r.squaredNorm() / dof, 4.0 * tau_tr.floor);
    }

    const auto pack = [&](double tau2, double c) {
        Vector t(free_params);
        int i = 0;
        if (!opts.fixed_tau2) t(i++) = tau_tr.param(std::max(tau2, 1.01 * tau_tr.floor));
        if (m.c_free) t(i++) = c_tr.param(std::max(c, 1.01 * c_tr.floor));
        return t;
    };
    const auto unpack = [&](const Vector& t, double& tau2, double& c) {
        int i = 0;
        tau2 = opts.fixed_tau2 ? *opts.fixed_tau2 : tau_tr.value(t(i++));
        c = m.c_free ? c_tr.value(t(i++)) : 1.0;
    };
    const auto objective = [&](const Vector& t) {
        double tau2, c;
        unpack(t, tau2, c);
        return -m.eval(tau2, c).loglik;
    };

    std::vector<StartPoint> starts;
    const double c0 = m.c_free ? std::max(0.5 * vhat / std::max(m.lam_mean, 1e-300), 2.0 * c_tr.floor) : 1.0;
    const double sampling_var = m.c_free ? c0 * m.lam_mean : m.lam_mean;
    starts.push_back({pack(std::max(vhat - sampling_var, 0.05 * vhat), c0)});          // method of moments
    starts.push_back({pack(10.0 * (vhat + sampling_var), m.c_free ? 2.0 * c0 : 1.0)}); // diffuse
    starts.push_back({pack(2.0 * tau_tr.floor, c0)});                                  // shrunk
    starts.resize(std::max(1, std::min<int>(opts.n_starts, static_cast<int>(starts.size()))));

    const MultiStartResult best = run_multistart(objective, starts, opts);
    double tau2, c;
    unpack(best.x, tau2, c);
    const auto ev = m.eval(tau2, c);

    FittedLinking out;
    if (family.kind == LinkingFamily::Kind::Regression) {
        out.spec = RegressionLink{family.X, ev.beta, tau2};
    } else {
        out.spec = Exchangeable{ev.beta(0), tau2};
    }
    if (m.c_free) out.sigma2 = c;
    out.loglik = ev.loglik;
    out.converged = best.converged;
    out.n_restarts_used = best.starts_used;
    out.at_variance_floor = tau2 <= 2.0 * tau_tr.floor || (m.c_free && c <= 2.0 * c_tr.floor);
    return out;
}

// ---- CarPath fits ----

struct MaskedVector {
    Vector y;
    std::vector<bool> observed;
    Vector sigma2;
};

MaskedVector masked_from_projection(const Vector& x, const Basis& basis, const Vector& sigma2_full) {
    const int p = basis.rows();
    MaskedVector mv;
    mv.y = Vector::Zero(p);
    mv.observed.assign(p, true);
    mv.sigma2 = sigma2_full;
    for (int d : basis.dropped) mv.observed[d] = false;
    int k = 0;
    for (int i = 0; i < p; ++i) {
        if (mv.observed[i]) mv.y(i) = x(k++);
    }
    if (k != x.size()) throw std::invalid_argument("fit_marginal_ml: projection size mismatch");
    return mv;
}

// Exact profile over mu: the log-likelihood is quadratic in mu, so three
// evaluations recover the maximizer and its value.
double car_profile_mu(const MaskedVector& mv, double beta1, double tau2, double* mu_hat) {
    const auto ll_at = [&](double mu) {
        return car_marginal_loglik({mu, beta1, tau2}, mv.y, mv.sigma2, mv.observed);
    };
    const double l0 = ll_at(0.0);
    if (!std::isfinite(l0)) return kNegInf;
    const double l1 = ll_at(1.0);
    const double lm = ll_at(-1.0);
    const double g = 0.5 * (l1 - lm);
    const double h = 2.0 * l0 - l1 - lm;
    if (!(h > 0.0)) {
        if (mu_hat) *mu_hat = 0.0;
        return l0;
    }
    if (mu_hat) *mu_hat = g / h;
    return l0 + 0.5 * g * g / h;
}

double lag1_correlation(const MaskedVector& mv) {
    double mean = 0.0;
    int count = 0;
    for (int i = 0; i < mv.y.size(); ++i) {
        if (mv.observed[i]) {
            mean += mv.y(i);
            ++count;
        }
    }
    if (count < 3) return 0.0;
    mean /= count;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < mv.y.size(); ++i) {
        if (!mv.observed[i]) continue;
        const double di = mv.y(i) - mean;
        den += di * di;
        if (i + 1 < mv.y.size() && mv.observed[i + 1]) num += di * (mv.y(i + 1) - mean);
    }
    return den > 0.0 ? num / den : 0.0;
}

FittedLinking fit_car_gmrf(const Vector& x, const Basis& basis, const DiagonalKnown& cov,
                           const FitOptions& opts) {
    const MaskedVector mv = masked_from_projection(x, basis, cov.sigma2);
    const double data_var = std::max(sample_var(x), 1e-12);
    VarTransform tau_tr{opts.variance_floor_rel * data_var};

    const bool tau_free = !opts.fixed_tau2.has_value();
    const auto unpack = [&](const Vector& t, double& beta1, double& tau2) {
        beta1 = 0.5 * std::tanh(t(0));
        tau2 = tau_free ? tau_tr.value(t(1)) : *opts.fixed_tau2;
    };
    const auto objective = [&](const Vector& t) {
        double beta1, tau2;
        unpack(t, beta1, tau2);
        return -car_profile_mu(mv, beta1, tau2, nullptr);
    };

    double sbar = 0.0;
    int nobs = 0;
    for (int i = 0; i < mv.y.size(); ++i) {
        if (mv.observed[i]) {
            sbar += mv.sigma2(i);
            ++nobs;
        }
    }
    sbar /= std::max(nobs, 1);
    const double excess = std::max(data_var - sbar, 0.05 * data_var);
    const double rho = std::clamp(lag1_correlation(mv), -0.95, 0.95);

    const auto pack = [&](double beta1, double tau2) {
        Vector t(tau_free ? 2 : 1);
        t(0) = std::atanh(2.0 * std::clamp(beta1, -0.4999, 0.4999));
        if (tau_free) t(1) = tau_tr.param(std::max(tau2, 1.01 * tau_tr.floor));
        return t;
    };
    const auto tau_for = [&](double beta1) {
        return std::max(excess * std::sqrt(1.0 - 4.0 * beta1 * beta1), 2.0 * tau_tr.floor);
    };

    std::vector<StartPoint> starts;
    const double b_mom = std::clamp(rho, -0.45, 0.45);
    starts.push_back({pack(b_mom, tau_for(b_mom))});
    starts.push_back({pack(0.0, excess)});
    const double b_strong = rho >= 0.0 ? 0.45 : -0.45;
    starts.push_back({pack(b_strong, tau_for(b_strong))});
    starts.resize(std::max(1, std::min<int>(opts.n_starts, static_cast<int>(starts.size()))));

    const MultiStartResult best = run_multistart(objective, starts, opts);
    double beta1, tau2;
    unpack(best.x, beta1, tau2);
    double mu_hat = 0.0;
    const double ll = car_profile_mu(mv, beta1, tau2, &mu_hat);

    FittedLinking out;
    out.spec = CarPathLink{{mu_hat, beta1, tau2}};
    out.loglik = ll;
    out.converged = best.converged;
    out.n_restarts_used = best.starts_used;
    out.at_variance_floor = tau2 <= 2.0 * tau_tr.floor;
    return out;
}

FittedLinking fit_car_dense(const Vector& x, const Basis& basis, const CovModel& cov,
                            const FitOptions& opts) {
    if (std::holds_alternative<KnownCorrelation>(cov))
        throw std::invalid_argument("fit_marginal_ml: CarPath needs a fully known covariance");
    const int p = basis.rows();
    const Matrix sigma = cov_matrix(cov);
    const Vector ones_proj = basis.project(Vector::Ones(p));
    const double data_var = std::max(sample_var(x), 1e-12);
    VarTransform tau_tr{opts.variance_floor_rel * data_var};
    const bool tau_free = !opts.fixed_tau2.has_value();

    const auto eval = [&](double beta1, double tau2, double* mu_out) -> double {
        if (!(std::fabs(beta1) < 0.5) || !(tau2 > 0.0)) return kNegInf;
        const Matrix psi = car_covariance(p, beta1, tau2);
        Matrix mcov = basis.project_columns(basis.project_columns(Matrix(sigma + psi)).transpose());
        mcov = 0.5 * (mcov + mcov.transpose());
        Eigen::LLT<Matrix> llt(mcov);
        if (llt.info() != Eigen::Success) return kNegInf;
        const Vector wi = llt.solve(ones_proj);
        const double h = ones_proj.dot(wi);
        const double mu = h > 0.0 ? wi.dot(x) / h : 0.0;
        if (mu_out) *mu_out = mu;
        const Vector r = x - mu * ones_proj;
        const int k = static_cast<int>(x.size());
        double logdet = 0.0;
        for (int i = 0; i < k; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
        return -0.5 * (k * kLog2Pi + logdet + r.dot(llt.solve(r)));
    };

    const auto unpack = [&](const Vector& t, double& beta1, double& tau2) {
        beta1 = 0.5 * std::tanh(t(0));
        tau2 = tau_free ? tau_tr.value(t(1)) : *opts.fixed_tau2;
    };
    const auto objective = [&](const Vector& t) {
        double beta1, tau2;
        unpack(t, beta1, tau2);
        return -eval(beta1, tau2, nullptr);
    };
    const auto pack = [&](double beta1, double tau2) {
        Vector t(tau_free ? 2 : 1);
        t(0) = std::atanh(2.0 * std::clamp(beta1, -0.4999, 0.4999));
        if (tau_free) t(1) = tau_tr.param(std::max(tau2, 1.01 * tau_tr.floor));
        return t;
    };

    std::vector<StartPoint> starts;
    starts.push_back({pack(0.0, data_var)});
    starts.push_back({pack(0.3, 0.5 * data_var)});
    starts.push_back({pack(-0.3, 0.5 * data_var)});
    starts.resize(std::max(1, std::min<int>(opts.n_starts, static_cast<int>(starts.size()))));

    const MultiStartResult best = run_multistart(objective, starts, opts);
    double beta1, tau2;
    unpack(best.x, beta1, tau2);
    double mu_hat = 0.0;
    const double ll = eval(beta1, tau2, &mu_hat);

    FittedLinking out;
    out.spec = CarPathLink{{mu_hat, beta1, tau2}};
    out.loglik = ll;
    out.converged = best.converged;
    out.n_restarts_used = best.starts_used;
    out.at_variance_floor = tau2 <= 2.0 * tau_tr.floor;
    return out;
}

} // namespace

bool is_diffuse(const LinkingSpec& spec) {
    if (const auto* e = std::get_if<Exchangeable>(&spec)) return std::isinf(e->tau2);
    return false;
}

LinkingMoments linking_moments(const LinkingSpec& spec, int p) {
    LinkingMoments out;
    if (const auto* e = std::get_if<Exchangeable>(&spec)) {
        if (!(e->tau2 > 0.0)) throw std::domain_error("linking_moments: tau2 must be positive");
        out.mu = Vector::Constant(p, e->mu);
        out.psi = e->tau2 * Matrix::Identity(p, p);
    } else if (const auto* r = std::get_if<RegressionLink>(&spec)) {
        if (!(r->tau2 > 0.0)) throw std::domain_error("linking_moments: tau2 must be positive");
        if (r->X.rows() != p || r->X.cols() != r->beta.size())
            throw std::invalid_argument("linking_moments: covariate dimensions");
        out.mu = r->X * r->beta;
        out.psi = r->tau2 * Matrix::Identity(p, p);
    } else if (const auto* c = std::get_if<CarPathLink>(&spec)) {
        if (!(std::fabs(c->par.beta1) < 0.5))
            throw std::domain_error("linking_moments: CarPath requires |beta1| < 1/2");
        if (!(c->par.tau2 > 0.0)) throw std::domain_error("linking_moments: tau2 must be positive");
        out.mu = Vector::Constant(p, c->par.mu);
        out.psi = car_covariance(p, c->par.beta1, c->par.tau2);
    } else {
        const auto& s = std::get<SpikeSlabLink>(spec);
        if (!(s.tau2 > 0.0)) throw std::domain_error("linking_moments: tau2 must be positive");
        if (!(s.w > 0.0) || s.w > 1.0) throw std::domain_error("linking_moments: w must be in (0, 1]");
        out.mu = Vector::Constant(p, s.mu);
        out.psi = s.tau2 * Matrix::Identity(p, p);
    }
    return out;
}

std::string family_name(LinkingFamily::Kind kind) {
    switch (kind) {
        case LinkingFamily::Kind::Exchangeable: return "exchangeable";
        case LinkingFamily::Kind::Regression: return "regression";
        case LinkingFamily::Kind::CarPath: return "car";
        case LinkingFamily::Kind::SpikeSlab: return "spikeslab";
    }
    return "unknown";
}

Vector FittedLinking::gamma() const {
    std::vector<double> g;
    if (const auto* e = std::get_if<Exchangeable>(&spec)) {
        g = {e->mu, e->tau2};
    } else if (const auto* r = std::get_if<RegressionLink>(&spec)) {
        g.assign(r->beta.data(), r->beta.data() + r->beta.size());
        g.push_back(r->tau2);
    } else if (const auto* c = std::get_if<CarPathLink>(&spec)) {
        g = {c->par.mu, c->par.beta1, c->par.tau2};
    } else {
        const auto& s = std::get<SpikeSlabLink>(spec);
        g = {s.mu, s.tau2, s.w};
    }
    if (sigma2) g.push_back(*sigma2);
    return Eigen::Map<const Vector>(g.data(), static_cast<int>(g.size()));
}

double marginal_loglik(const LinkingSpec& spec, std::optional<double> sigma2, const Vector& x,
                       const Basis& basis, const CovModel& cov) {
    const int p = basis.rows();
    const LinkingMoments lm = linking_moments(spec, p);
    const Matrix sigma = cov_matrix(cov, sigma2);
    Matrix m = basis.project_columns(basis.project_columns(Matrix(sigma + lm.psi)).transpose());
    m = 0.5 * (m + m.transpose());
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return kNegInf;
    const Vector r = x - basis.project(lm.mu);
    const int k = static_cast<int>(x.size());
    double logdet = 0.0;
    for (int i = 0; i < k; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * (k * kLog2Pi + logdet + r.dot(llt.solve(r)));
}

FittedLinking fit_marginal_ml(const LinkingFamily& family, const Vector& x, const Basis& basis,
                              const CovModel& cov, const FitOptions& opts) {
    if (x.size() != basis.cols())
        throw std::invalid_argument("fit_marginal_ml: data does not match the basis");
    switch (family.kind) {
        case LinkingFamily::Kind::Exchangeable:
        case LinkingFamily::Kind::Regression:
            return fit_tau_family(family, x, basis, cov, opts);
        case LinkingFamily::Kind::CarPath: {
            const auto* diag = std::get_if<DiagonalKnown>(&cov);
            if (diag != nullptr && basis.coordinate_basis) return fit_car_gmrf(x, basis, *diag, opts);
            return fit_car_dense(x, basis, cov, opts);
        }
        case LinkingFamily::Kind::SpikeSlab:
            throw std::invalid_argument("fit_marginal_ml: SpikeSlab is fitted by fit_spike_slab");
    }
    throw std::logic_error("fit_marginal_ml: unreachable");
}

FittedLinking fit_fay_herriot(const Vector& ybar, const Vector& s2, const Vector& n,
                              const Matrix& X, const std::vector<int>& exclude,
                              const FitOptions& opts) {
    const int p = static_cast<int>(ybar.size());
    if (s2.size() != p || n.size() != p)
        throw std::invalid_argument("fit_fay_herriot: dimension mismatch");
    const Matrix design = X.cols() > 0 ? X : Matrix(Matrix::Ones(p, 1));
    if (design.rows() != p) throw std::invalid_argument("fit_fay_herriot: covariate rows mismatch");
    const int q = static_cast<int>(design.cols());

    std::vector<bool> use(p, true);
    for (int e : exclude) {
        if (e >= 0 && e < p) use[e] = false;
    }
    std::vector<int> idx;
    for (int i = 0; i < p; ++i) {
        if (!use[i]) continue;
        if (!(n(i) >= 2.0)) throw FitError("fit_fay_herriot: group size must be at least 2");
        if (!(s2(i) > 0.0)) throw FitError("fit_fay_herriot: group variance must be positive");
        idx.push_back(i);
    }
    const int k = static_cast<int>(idx.size());
    if (k < q + 1) throw FitError("fit_fay_herriot: not enough groups for the fit");

    Vector yb(k), sv(k), nk(k);
    Matrix xk(k, q);
    for (int i = 0; i < k; ++i) {
        yb(i) = ybar(idx[i]);
        sv(i) = s2(idx[i]);
        nk(i) = n(idx[i]);
        xk.row(i) = design.row(idx[i]);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(xk);
    qr.setThreshold(1e-10);
    if (qr.rank() < q) throw RankError("fit_fay_herriot: covariate matrix is rank deficient");

    // chi^2 part of the log-likelihood for the group variances.
    const auto s2_loglik = [&](double sigma2) {
        double ll = 0.0;
        for (int i = 0; i < k; ++i) {
            const double nu = nk(i) - 1.0;
            const double w = nu * sv(i) / sigma2;
            ll += (0.5 * nu - 1.0) * std::log(w) - 0.5 * w - std::lgamma(0.5 * nu) -
                  0.5 * nu * std::log(2.0) + std::log(nu / sigma2);
        }
        return ll;
    };

    const double pooled = (sv.array() * (nk.array() - 1.0)).sum() / (nk.array() - 1.0).sum();
    const double ybar_var = std::max(sample_var(yb), 1e-12);
    VarTransform tau_tr{opts.variance_floor_rel * ybar_var};
    VarTransform sig_tr{opts.variance_floor_rel * pooled};
    const bool tau_free = !opts.fixed_tau2.has_value();

    struct Eval {
        double loglik = kNegInf;
        Vector beta;
    };
    const auto eval = [&](double tau2, double sigma2) -> Eval {
        Eval out;
        if (!(sigma2 > 0.0) || !(tau2 >= 0.0)) return out;
        const Vector d = (sigma2 * nk.cwiseInverse().array() + tau2).matrix();
        const Vector w = d.cwiseInverse();
        Matrix a = xk.transpose() * w.asDiagonal() * xk;
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success) return out;
        out.beta = llt.solve(xk.transpose() * (w.asDiagonal() * yb));
        const Vector r = yb - xk * out.beta;
        double ll = -0.5 * k * kLog2Pi - 0.5 * d.array().log().sum() -
                    0.5 * (r.array().square() * w.array()).sum();
        out.loglik = ll + s2_loglik(sigma2);
        return out;
    };

    const auto unpack = [&](const Vector& t, double& tau2, double& sigma2) {
        int i = 0;
        tau2 = tau_free ? tau_tr.value(t(i++)) : *opts.fixed_tau2;
        sigma2 = sig_tr.value(t(i));
    };
    const auto objective = [&](const Vector& t) {
        double tau2, sigma2;
        unpack(t, tau2, sigma2);
        return -eval(tau2, sigma2).loglik;
    };
    const auto pack = [&](double tau2, double sigma2) {
        Vector t(tau_free ? 2 : 1);
        int i = 0;
        if (tau_free) t(i++) = tau_tr.param(std::max(tau2, 1.01 * tau_tr.floor));
        t(i) = sig_tr.param(std::max(sigma2, 1.01 * sig_tr.floor));
        return t;
    };

    const double mean_se2 = (pooled * nk.cwiseInverse().array()).mean();
    std::vector<StartPoint> starts;
    starts.push_back({pack(std::max(ybar_var - mean_se2, 0.05 * ybar_var), pooled)});
    starts.push_back({pack(10.0 * ybar_var, pooled)});
    starts.push_back({pack(2.0 * tau_tr.floor, pooled)});
    starts.resize(std::max(1, std::min<int>(opts.n_starts, static_cast<int>(starts.size()))));

    const MultiStartResult best = run_multistart(objective, starts, opts);
    double tau2, sigma2;
    unpack(best.x, tau2, sigma2);
    const Eval ev = eval(tau2, sigma2);

    FittedLinking out;
    out.spec = RegressionLink{design, ev.beta, tau2};
    out.sigma2 = sigma2;
    out.loglik = ev.loglik;
    out.converged = best.converged;
    out.n_restarts_used = best.starts_used;
    out.at_variance_floor = tau2 <= 2.0 * tau_tr.floor;
    return out;
}

FittedLinking fit_spike_slab(const Vector& theta, const Vector& scales, const FitOptions& opts) {
    const int k = static_cast<int>(theta.size());
    if (scales.size() != k) throw std::invalid_argument("fit_spike_slab: dimension mismatch");
    if (k < 3) throw FitError("fit_spike_slab: needs at least 3 pseudo-observations");
    for (int i = 0; i < k; ++i) {
        if (!(scales(i) > 0.0)) throw FitError("fit_spike_slab: scales must be positive");
    }

    const double ms = std::max(theta.squaredNorm() / k, 1e-12);
    const double tau_floor = opts.variance_floor_rel * ms;

    const auto log_norm = [](double y, double mean, double var) {
        const double r = y - mean;
        return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
    };
    const auto loglik = [&](double mu, double tau2, double w) {
        double ll = 0.0;
        for (int i = 0; i < k; ++i) {
            const double s2 = scales(i) * scales(i);
            const double l1 = std::log(w) + log_norm(theta(i), mu, tau2 + s2);
            const double l0 = w >= 1.0 ? kNegInf : std::log1p(-w) + log_norm(theta(i), 0.0, s2);
            const double hi = std::max(l1, l0);
            ll += hi + std::log(std::exp(l1 - hi) + std::exp(l0 - hi));
        }
        return ll;
    };

    struct State {
        double mu, tau2, w, loglik;
        bool converged = false;
        int iterations = 0;
    };

    const auto run_em = [&](double mu, double tau2, double w) -> State {
        State st{mu, std::max(tau2, tau_floor), std::clamp(w, 1e-6, 1.0), kNegInf};
        double prev = loglik(st.mu, st.tau2, st.w);
        for (int it = 0; it < 1000; ++it) {
            double sum_r = 0.0, sum_rm = 0.0;
            Vector resp(k), pm(k), pv(k);
            for (int i = 0; i < k; ++i) {
                const double s2 = scales(i) * scales(i);
                const double l1 = std::log(st.w) + log_norm(theta(i), st.mu, st.tau2 + s2);
                const double l0 =
                    st.w >= 1.0 ? kNegInf : std::log1p(-st.w) + log_norm(theta(i), 0.0, s2);
                const double hi = std::max(l1, l0);
                const double r = std::exp(l1 - hi) / (std::exp(l1 - hi) + std::exp(l0 - hi));
                resp(i) = r;
                pv(i) = 1.0 / (1.0 / st.tau2 + 1.0 / s2);
                pm(i) = pv(i) * (st.mu / st.tau2 + theta(i) / s2);
                sum_r += r;
                sum_rm += r * pm(i);
            }
            if (sum_r <= 1e-12) break;
            const double mu_new = sum_rm / sum_r;
            double tau_new = 0.0;
            for (int i = 0; i < k; ++i) {
                const double d = pm(i) - mu_new;
                tau_new += resp(i) * (pv(i) + d * d);
            }
            tau_new = std::max(tau_new / sum_r, tau_floor);
            const double w_new = std::clamp(sum_r / k, 1e-6, 1.0);

            const double ll = loglik(mu_new, tau_new, w_new);
            if (ll < prev - 1e-8)
                throw std::logic_error("fit_spike_slab: EM decreased the log-likelihood");
            st.mu = mu_new;
            st.tau2 = tau_new;
            st.w = w_new;
            st.iterations = it + 1;
            if (std::fabs(ll - prev) < 1e-10 * (1.0 + std::fabs(ll))) {
                st.converged = true;
                prev = ll;
                break;
            }
            prev = ll;
        }
        st.loglik = prev;
        return st;
    };

    // Start 1: slab centered on the larger half of the observations.
    Vector abs_sorted = theta.cwiseAbs();
    std::sort(abs_sorted.data(), abs_sorted.data() + k);
    const double median_abs = abs_sorted(k / 2);
    double top_sum = 0.0, top_sq = 0.0;
    int top_n = 0;
    for (int i = 0; i < k; ++i) {
        if (std::fabs(theta(i)) >= median_abs) {
            top_sum += theta(i);
            top_sq += theta(i) * theta(i);
            ++top_n;
        }
    }
    const double top_mean = top_n > 0 ? top_sum / top_n : 0.0;
    const double top_var =
        top_n > 1 ? std::max((top_sq - top_n * top_mean * top_mean) / (top_n - 1), tau_floor)
                  : ms;
    State best = run_em(top_mean, top_var, 0.5);
    int starts_used = 1;
    if (opts.n_starts > 1) {
        const State alt = run_em(sample_mean(theta), std::max(sample_var(theta), tau_floor), 0.9);
        ++starts_used;
        if (alt.loglik > best.loglik) best = alt;
    }

    FittedLinking out;
    out.spec = SpikeSlabLink{best.mu, best.tau2, best.w};
    out.loglik = best.loglik;
    out.converged = best.converged;
    out.n_restarts_used = starts_used;
    out.at_variance_floor = best.tau2 <= 2.0 * tau_floor;
    return out;
}

} // namespace fab
