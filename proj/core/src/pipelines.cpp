#include "fab/pipelines.hpp"

#include "fab/errors.hpp"
#include "fab/gmrf.hpp"
#include "fab/pvalue.hpp"
#include "fab/student_t.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

namespace fab {

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct ResolvedLinking {
    LinkingSpec spec;
    std::optional<double> sigma2;
    bool ok = false;
    std::string note;
};

double shift_from_moments(double m, double v, double sigma_direct, double null_value) {
    // A mean offset at floating-point-noise level relative to its own
    // magnitude is not evidence of direction; degenerate fits (tau2 at the
    // floor) would otherwise blow it up into an arbitrary one-sided test.
    const double offset = m - null_value;
    if (std::fabs(offset) <= 1e-10 * (std::fabs(m) + std::fabs(null_value))) return 0.0;
    return 2.0 * offset * sigma_direct / v;
}

// Prior mean of coordinate j under a fitted spec (dense moments avoided for
// the diagonal shortcuts).
double prior_mean_at(const LinkingSpec& spec, int j) {
    if (const auto* e = std::get_if<Exchangeable>(&spec)) return e->mu;
    if (const auto* r = std::get_if<RegressionLink>(&spec)) return r->X.row(j).dot(r->beta);
    if (const auto* c = std::get_if<CarPathLink>(&spec)) return c->par.mu;
    return std::get<SpikeSlabLink>(spec).mu;
}

double prior_tau2(const LinkingSpec& spec) {
    if (const auto* e = std::get_if<Exchangeable>(&spec)) return e->tau2;
    if (const auto* r = std::get_if<RegressionLink>(&spec)) return r->tau2;
    if (const auto* c = std::get_if<CarPathLink>(&spec)) return c->par.tau2;
    return std::get<SpikeSlabLink>(spec).tau2;
}

void validate_mode(const Mode& mode, const char* where) {
    if (mode.kind == Mode::Kind::Blocked && mode.blocks < 2)
        throw std::invalid_argument(std::string(where) + ": blocked mode needs k >= 2");
}

} // namespace

std::string mode_name(Mode::Kind kind) {
    switch (kind) {
        case Mode::Kind::Exact: return "exact";
        case Mode::Kind::Blocked: return "blocked";
        case Mode::Kind::Shared: return "shared";
    }
    return "unknown";
}

std::vector<std::pair<int, int>> contiguous_blocks(int p, int k) {
    k = std::max(1, std::min(k, p));
    std::vector<std::pair<int, int>> blocks;
    blocks.reserve(k);
    for (int i = 0; i < k; ++i) {
        const int begin = static_cast<int>(static_cast<long long>(i) * p / k);
        const int end = static_cast<int>(static_cast<long long>(i + 1) * p / k);
        if (end > begin) blocks.emplace_back(begin, end);
    }
    return blocks;
}

namespace {

// ---- fab_means_z ----

struct MeansContext {
    const Vector& y;
    Vector sigma2_diag;  // diagonal of the effective covariance
    const Matrix* sigma_full = nullptr; // null for DiagonalKnown
    const LinkingChoice& linking;
    Mode mode;
    const Vector& nulls;
};

ResolvedLinking fit_means_subset(const MeansContext& ctx, const std::vector<int>& excluded,
                                 const std::vector<Basis>* moment_bases) {
    ResolvedLinking out;
    if (const auto* fixed = std::get_if<FixedLinking>(&ctx.linking)) {
        out.spec = fixed->spec;
        out.sigma2 = fixed->sigma2;
        out.ok = true;
        return out;
    }
    const auto& ff = std::get<FitFamily>(ctx.linking);
    const int p = static_cast<int>(ctx.y.size());
    try {
        if (ff.family.kind == LinkingFamily::Kind::SpikeSlab) {
            std::vector<bool> drop(p, false);
            for (int e : excluded) drop[e] = true;
            const int k = p - static_cast<int>(excluded.size());
            Vector obs(k), scales(k);
            int c = 0;
            for (int i = 0; i < p; ++i) {
                if (drop[i]) continue;
                obs(c) = ctx.y(i);
                scales(c) = std::sqrt(ctx.sigma2_diag(i));
                ++c;
            }
            const FittedLinking fit = fit_spike_slab(obs, scales, ff.options);
            out.spec = fit.spec;
            out.ok = true;
            return out;
        }

        Basis basis;
        if (ctx.sigma_full == nullptr) {
            basis = excluded.empty() ? identity_basis(p) : delete_columns_basis(p, excluded);
        } else if (excluded.empty()) {
            basis = identity_basis(p);
        } else if (excluded.size() == 1 && moment_bases != nullptr) {
            basis = (*moment_bases)[excluded[0]];
        } else {
            Matrix cols(p, excluded.size());
            for (std::size_t c = 0; c < excluded.size(); ++c)
                cols.col(c) = ctx.sigma_full->col(excluded[c]);
            basis = nullspace_basis(cols, excluded);
        }
        const CovModel cov = ctx.sigma_full == nullptr
                                 ? CovModel(DiagonalKnown{ctx.sigma2_diag})
                                 : CovModel(FullKnown{*ctx.sigma_full});
        const FittedLinking fit =
            fit_marginal_ml(ff.family, basis.project(ctx.y), basis, cov, ff.options);
        out.spec = fit.spec;
        out.sigma2 = fit.sigma2;
        out.ok = true;
    } catch (const std::exception& e) {
        out.note = e.what();
    }
    return out;
}

double means_shift(const MeansContext& ctx, const ResolvedLinking& rl, int j,
                   const std::vector<Basis>* moment_bases) {
    if (is_diffuse(rl.spec)) return 0.0;
    const double sigma_j = std::sqrt(ctx.sigma2_diag(j));
    const int p = static_cast<int>(ctx.y.size());

    if (ctx.sigma_full == nullptr) {
        if (const auto* car = std::get_if<CarPathLink>(&rl.spec)) {
            const auto [m, v] = car_conditional_moments(car->par, ctx.y, ctx.sigma2_diag, j);
            return shift_from_moments(m, v, sigma_j, ctx.nulls(j));
        }
        // Diagonal prior and diagonal noise: theta_j is independent of the
        // indirect data, so the conditional moments are the prior moments.
        return shift_from_moments(prior_mean_at(rl.spec, j), prior_tau2(rl.spec), sigma_j,
                                  ctx.nulls(j));
    }

    const LinkingMoments lm = linking_moments(rl.spec, p);
    const Basis& basis = (*moment_bases)[j];
    const IndirectMoments im =
        conditional_moments_projected(lm.mu, lm.psi, *ctx.sigma_full, basis, basis.project(ctx.y));
    return shift_from_moments(im.m_target, im.v_target, sigma_j, ctx.nulls(j));
}

} // namespace

std::vector<FabResult> fab_means_z(const Vector& y, const CovModel& cov,
                                   const LinkingChoice& linking, const Mode& mode,
                                   const Vector& null_values, int threads) {
    const int p = static_cast<int>(y.size());
    if (p < 2) throw std::invalid_argument("fab_means_z: needs at least two coordinates");
    if (null_values.size() != p) throw std::invalid_argument("fab_means_z: null vector size");
    validate_mode(mode, "fab_means_z");

    const auto* diag = std::get_if<DiagonalKnown>(&cov);
    const auto* full = std::get_if<FullKnown>(&cov);
    if (diag == nullptr && full == nullptr)
        throw std::invalid_argument("fab_means_z: covariance must be DiagonalKnown or FullKnown");

    MeansContext ctx{y, diag != nullptr ? diag->sigma2 : Vector(full->sigma.diagonal()),
                     full != nullptr ? &full->sigma : nullptr, linking, mode, null_values};
    if ((ctx.sigma2_diag.array() <= 0.0).any())
        throw std::invalid_argument("fab_means_z: variances must be positive");

    std::vector<Basis> moment_bases;
    if (full != nullptr) {
        moment_bases.resize(p);
        parallel_for(p, threads, [&](int j) {
            moment_bases[j] = nullspace_basis(full->sigma.col(j), j);
        });
    }
    const auto* bases_ptr = full != nullptr ? &moment_bases : nullptr;

    // Resolve the linking parameters used for each hypothesis.
    std::vector<ResolvedLinking> resolved(p);
    if (std::holds_alternative<FixedLinking>(linking)) {
        const ResolvedLinking rl = fit_means_subset(ctx, {}, bases_ptr);
        for (auto& r : resolved) r = rl;
    } else {
        switch (mode.kind) {
            case Mode::Kind::Shared: {
                const ResolvedLinking rl = fit_means_subset(ctx, {}, bases_ptr);
                for (auto& r : resolved) r = rl;
                break;
            }
            case Mode::Kind::Exact: {
                parallel_for(p, threads, [&](int j) {
                    resolved[j] = fit_means_subset(ctx, {j}, bases_ptr);
                });
                break;
            }
            case Mode::Kind::Blocked: {
                if (mode.blocks < 2) throw std::invalid_argument("fab_means_z: blocked mode needs k >= 2");
                const auto blocks = contiguous_blocks(p, mode.blocks);
                parallel_for(static_cast<int>(blocks.size()), threads, [&](int bi) {
                    std::vector<int> excluded;
                    for (int j = blocks[bi].first; j < blocks[bi].second; ++j) excluded.push_back(j);
                    const ResolvedLinking rl = fit_means_subset(ctx, excluded, bases_ptr);
                    for (int j = blocks[bi].first; j < blocks[bi].second; ++j) resolved[j] = rl;
                });
                break;
            }
        }
    }

    std::vector<FabResult> results(p);
    parallel_for(p, threads, [&](int j) {
        FabResult& r = results[j];
        r.index = j;
        r.mode = mode.kind;
        const double sigma_j = std::sqrt(ctx.sigma2_diag(j));
        r.stat = (y(j) - null_values(j)) / sigma_j;
        r.p_umpu = fab_p_normal(r.stat, 0.0);
        r.shift = 0.0;
        if (!resolved[j].ok) {
            r.status = ResultStatus::UmpuFallback;
            r.note = resolved[j].note;
        } else {
            try {
                r.shift = means_shift(ctx, resolved[j], j, bases_ptr);
            } catch (const std::exception& e) {
                r.status = ResultStatus::UmpuFallback;
                r.note = e.what();
                r.shift = 0.0;
            }
        }
        r.p_fab = fab_p_normal(r.stat, r.shift);
    });
    return results;
}

// ---- fab_means_t ----

std::vector<FabResult> fab_means_t(const Vector& ybar, const Vector& s2, const Vector& n,
                                   const Matrix& X, double null_value, const Mode& mode,
                                   int threads) {
    return fab_means_t(ybar, s2, n, X, Vector(Vector::Constant(ybar.size(), null_value)), mode,
                       threads);
}

std::vector<FabResult> fab_means_t(const Vector& ybar, const Vector& s2, const Vector& n,
                                   const Matrix& X, const Vector& null_values, const Mode& mode,
                                   int threads) {
    const int p = static_cast<int>(ybar.size());
    if (s2.size() != p || n.size() != p || null_values.size() != p)
        throw std::invalid_argument("fab_means_t: dimension mismatch");
    validate_mode(mode, "fab_means_t");
    const Matrix design = X.cols() > 0 ? X : Matrix(Matrix::Ones(p, 1));
    if (design.rows() != p) throw std::invalid_argument("fab_means_t: covariate rows mismatch");

    std::vector<int> invalid;
    for (int j = 0; j < p; ++j) {
        if (!(n(j) >= 2.0) || !(s2(j) > 0.0)) invalid.push_back(j);
    }

    const auto fit_excluding = [&](const std::vector<int>& block) -> ResolvedLinking {
        ResolvedLinking out;
        std::vector<int> excluded = invalid;
        excluded.insert(excluded.end(), block.begin(), block.end());
        try {
            const FittedLinking fit = fit_fay_herriot(ybar, s2, n, design, excluded);
            out.spec = fit.spec;
            out.sigma2 = fit.sigma2;
            out.ok = true;
        } catch (const std::exception& e) {
            out.note = e.what();
        }
        return out;
    };

    std::vector<ResolvedLinking> resolved(p);
    switch (mode.kind) {
        case Mode::Kind::Shared: {
            const ResolvedLinking rl = fit_excluding({});
            for (auto& r : resolved) r = rl;
            break;
        }
        case Mode::Kind::Exact: {
            parallel_for(p, threads, [&](int j) { resolved[j] = fit_excluding({j}); });
            break;
        }
        case Mode::Kind::Blocked: {
            if (mode.blocks < 2) throw std::invalid_argument("fab_means_t: blocked mode needs k >= 2");
            const auto blocks = contiguous_blocks(p, mode.blocks);
            parallel_for(static_cast<int>(blocks.size()), threads, [&](int bi) {
                std::vector<int> block;
                for (int j = blocks[bi].first; j < blocks[bi].second; ++j) block.push_back(j);
                const ResolvedLinking rl = fit_excluding(block);
                for (int j : block) resolved[j] = rl;
            });
            break;
        }
    }

    std::vector<FabResult> results(p);
    parallel_for(p, threads, [&](int j) {
        FabResult& r = results[j];
        r.index = j;
        r.mode = mode.kind;
        if (!(n(j) >= 2.0) || !(s2(j) > 0.0)) {
            r.status = ResultStatus::Error;
            r.note = "group needs n >= 2 and s > 0";
            return;
        }
        const double nu = n(j) - 1.0;
        const double se = std::sqrt(s2(j) / n(j));
        r.df = nu;
        r.stat = (ybar(j) - null_values(j)) / se;
        r.p_umpu = fab_p_student_t(r.stat, 0.0, nu);
        r.shift = 0.0;
        if (!resolved[j].ok) {
            r.status = ResultStatus::UmpuFallback;
            r.note = resolved[j].note;
        } else {
            const auto& reg = std::get<RegressionLink>(resolved[j].spec);
            const double prior_mean = design.row(j).dot(reg.beta);
            const double sigma_tilde = std::sqrt(*resolved[j].sigma2 / n(j));
            r.shift = shift_from_moments(prior_mean, reg.tau2, sigma_tilde, null_values(j));
        }
        r.p_fab = fab_p_student_t(r.stat, r.shift, nu);
    });
    return results;
}

// ---- fab_lm / fab_lm_partial ----

namespace {

double lm_shift_from_spec(int j, const Basis& basis, const Vector& beta_proj, const Matrix& omega,
                          const LinkingSpec& spec, double sigma2) {
    if (is_diffuse(spec)) return 0.0;
    const int p = static_cast<int>(omega.rows());
    const LinkingMoments lm = linking_moments(spec, p);
    const Matrix sigma = sigma2 * omega;
    const IndirectMoments im =
        conditional_moments_projected(lm.mu, lm.psi, sigma, basis, beta_proj);
    return shift_from_moments(im.m_target, im.v_target, std::sqrt(sigma(j, j)), 0.0);
}

struct OlsFit {
    Vector beta;
    double sigma2_hat = 0.0;
    double df = 0.0;
    Matrix omega; // covariance factor of beta_hat: Cov = sigma2 * omega
};

OlsFit ols_fit(const Matrix& x, const Vector& y) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (y.size() != n) throw std::invalid_argument("fab_lm: response length mismatch");
    if (n <= p) throw std::invalid_argument("fab_lm: needs more rows than columns");
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::string cols;
        const auto perm = qr.colsPermutation().indices();
        for (int i = qr.rank(); i < p; ++i) cols += (cols.empty() ? "" : ", ") + std::to_string(perm(i));
        throw RankError("fab_lm: design is rank deficient (columns " + cols + ")");
    }
    OlsFit fit;
    fit.beta = qr.solve(y);
    const Vector resid = y - x * fit.beta;
    fit.df = n - p;
    fit.sigma2_hat = resid.squaredNorm() / fit.df;
    const Matrix xtx = x.transpose() * x;
    fit.omega = xtx.llt().solve(Matrix::Identity(p, p));
    fit.omega = 0.5 * (fit.omega + fit.omega.transpose());
    return fit;
}

std::vector<FabResult> lm_pipeline(const Vector& beta_hat, const Matrix& omega,
                                   double sigma2_hat, double df, const LinkingChoice& linking,
                                   const Mode& mode, int threads) {
    const int p = static_cast<int>(beta_hat.size());
    validate_mode(mode, "fab_lm");
    if (const auto* ff = std::get_if<FitFamily>(&linking)) {
        if (ff->family.kind == LinkingFamily::Kind::CarPath ||
            ff->family.kind == LinkingFamily::Kind::SpikeSlab)
            throw std::invalid_argument(
                "fab_lm: linking family must be exchangeable or regression");
    }

    std::vector<Basis> bases(p);
    parallel_for(p, threads, [&](int j) { bases[j] = nullspace_basis(omega.col(j), j); });

    const auto fit_excluding = [&](const std::vector<int>& excluded) -> ResolvedLinking {
        ResolvedLinking out;
        if (const auto* fixed = std::get_if<FixedLinking>(&linking)) {
            out.spec = fixed->spec;
            out.sigma2 = fixed->sigma2;
            out.ok = true;
            return out;
        }
        const auto& ff = std::get<FitFamily>(linking);
        try {
            Basis basis;
            if (excluded.empty()) basis = identity_basis(p);
            else if (excluded.size() == 1) basis = bases[excluded[0]];
            else {
                Matrix cols(p, excluded.size());
                for (std::size_t c = 0; c < excluded.size(); ++c)
                    cols.col(c) = omega.col(excluded[c]);
                basis = nullspace_basis(cols, excluded);
            }
            const FittedLinking fit = fit_marginal_ml(ff.family, basis.project(beta_hat), basis,
                                                      KnownCorrelation{omega}, ff.options);
            out.spec = fit.spec;
            out.sigma2 = fit.sigma2;
            out.ok = true;
        } catch (const std::exception& e) {
            out.note = e.what();
        }
        return out;
    };

    std::vector<ResolvedLinking> resolved(p);
    switch (mode.kind) {
        case Mode::Kind::Shared: {
            const ResolvedLinking rl = fit_excluding({});
            for (auto& r : resolved) r = rl;
            break;
        }
        case Mode::Kind::Exact:
            parallel_for(p, threads, [&](int j) { resolved[j] = fit_excluding({j}); });
            break;
        case Mode::Kind::Blocked: {
            if (mode.blocks < 2) throw std::invalid_argument("fab_lm: blocked mode needs k >= 2");
            const auto blocks = contiguous_blocks(p, mode.blocks);
            parallel_for(static_cast<int>(blocks.size()), threads, [&](int bi) {
                std::vector<int> block;
                for (int j = blocks[bi].first; j < blocks[bi].second; ++j) block.push_back(j);
                const ResolvedLinking rl = fit_excluding(block);
                for (int j : block) resolved[j] = rl;
            });
            break;
        }
    }

    std::vector<FabResult> results(p);
    parallel_for(p, threads, [&](int j) {
        FabResult& r = results[j];
        r.index = j;
        r.mode = mode.kind;
        r.df = df;
        const double se = std::sqrt(omega(j, j) * sigma2_hat);
        r.stat = beta_hat(j) / se;
        r.p_umpu = fab_p_student_t(r.stat, 0.0, df);
        r.shift = 0.0;
        if (!resolved[j].ok) {
            r.status = ResultStatus::UmpuFallback;
            r.note = resolved[j].note;
        } else {
            try {
                // The scale plugged into the linking covariance must come
                // from the fit (or the caller), never from the OLS residual
                // estimate tied to the t statistic.
                if (!resolved[j].sigma2 && !is_diffuse(resolved[j].spec))
                    throw std::invalid_argument("fab_lm: linking spec needs a sigma2 scale");
                r.shift = lm_shift_from_spec(j, bases[j], bases[j].project(beta_hat), omega,
                                             resolved[j].spec, resolved[j].sigma2.value_or(1.0));
            } catch (const std::exception& e) {
                r.status = ResultStatus::UmpuFallback;
                r.note = e.what();
                r.shift = 0.0;
            }
        }
        r.p_fab = fab_p_student_t(r.stat, r.shift, df);
    });
    return results;
}

} // namespace

double lm_coefficient_shift(int j, const Basis& basis, const Vector& beta_proj,
                            const Matrix& omega, const LinkingChoice& linking) {
    if (const auto* fixed = std::get_if<FixedLinking>(&linking)) {
        if (is_diffuse(fixed->spec)) return 0.0;
        if (!fixed->sigma2)
            throw std::invalid_argument("lm_coefficient_shift: fixed linking needs sigma2");
        return lm_shift_from_spec(j, basis, beta_proj, omega, fixed->spec, *fixed->sigma2);
    }
    const auto& ff = std::get<FitFamily>(linking);
    const FittedLinking fit =
        fit_marginal_ml(ff.family, beta_proj, basis, KnownCorrelation{omega}, ff.options);
    return lm_shift_from_spec(j, basis, beta_proj, omega, fit.spec, *fit.sigma2);
}

std::vector<FabResult> fab_lm(const Matrix& X, const Vector& y, const LinkingChoice& linking,
                              const Mode& mode, int threads) {
    const OlsFit fit = ols_fit(X, y);
    return lm_pipeline(fit.beta, fit.omega, fit.sigma2_hat, fit.df, linking, mode, threads);
}

std::vector<FabResult> fab_lm_partial(const Matrix& W, const Matrix& X, const Vector& y,
                                      const LinkingChoice& linking, const Mode& mode,
                                      int threads) {
    if (W.cols() == 0) return fab_lm(X, y, linking, mode, threads);
    const int n = static_cast<int>(X.rows());
    if (W.rows() != n) throw std::invalid_argument("fab_lm_partial: design rows mismatch");
    const int q = static_cast<int>(W.cols());
    const int p = static_cast<int>(X.cols());
    Matrix full(n, q + p);
    full << W, X;
    const OlsFit fit = ols_fit(full, y);
    const Vector beta = fit.beta.tail(p);
    const Matrix omega = fit.omega.bottomRightCorner(p, p);
    return lm_pipeline(beta, omega, fit.sigma2_hat, fit.df, linking, mode, threads);
}

// ---- fab_asymptotic ----

std::vector<FabResult> fab_asymptotic(const Vector& theta_hat, const Matrix& sigma_hat, double n,
                                      const LinkingChoice& linking, const Mode& mode,
                                      int threads) {
    const int p = static_cast<int>(theta_hat.size());
    if (sigma_hat.rows() != p || sigma_hat.cols() != p)
        throw std::invalid_argument("fab_asymptotic: dimension mismatch");
    if (!(n > 0.0)) throw std::invalid_argument("fab_asymptotic: n must be positive");
    validate_mode(mode, "fab_asymptotic");
    if (const auto* ff = std::get_if<FitFamily>(&linking)) {
        if (ff->family.kind != LinkingFamily::Kind::SpikeSlab &&
            ff->family.kind != LinkingFamily::Kind::Exchangeable)
            throw std::invalid_argument(
                "fab_asymptotic: linking family must be spikeslab or exchangeable");
    }

    const Vector pseudo = std::sqrt(n) * theta_hat;
    Vector sig(p);
    std::vector<bool> valid(p, true);
    for (int j = 0; j < p; ++j) {
        const double v = sigma_hat(j, j);
        valid[j] = v > 0.0;
        sig(j) = valid[j] ? std::sqrt(v) : 0.0;
    }

    std::vector<Basis> bases(p);
    std::vector<std::string> basis_err(p);
    parallel_for(p, threads, [&](int j) {
        if (!valid[j]) return;
        try {
            bases[j] = nullspace_basis(sigma_hat.col(j), j);
        } catch (const std::exception& e) {
            valid[j] = false;
            basis_err[j] = e.what();
        }
    });

    const auto fit_excluding = [&](const std::vector<int>& excluded) -> ResolvedLinking {
        ResolvedLinking out;
        if (const auto* fixed = std::get_if<FixedLinking>(&linking)) {
            out.spec = fixed->spec;
            out.ok = true;
            return out;
        }
        const auto& ff = std::get<FitFamily>(linking);
        try {
            if (ff.family.kind == LinkingFamily::Kind::SpikeSlab) {
                std::vector<bool> drop(p, false);
                for (int e : excluded) drop[e] = true;
                std::vector<double> obs, sc;
                for (int i = 0; i < p; ++i) {
                    if (drop[i] || !valid[i]) continue;
                    obs.push_back(pseudo(i));
                    sc.push_back(sig(i));
                }
                const FittedLinking fit =
                    fit_spike_slab(Eigen::Map<const Vector>(obs.data(), obs.size()),
                                   Eigen::Map<const Vector>(sc.data(), sc.size()), ff.options);
                out.spec = fit.spec;
                out.ok = true;
                return out;
            }
            Basis basis;
            if (excluded.empty()) basis = identity_basis(p);
            else if (excluded.size() == 1) basis = bases[excluded[0]];
            else {
                Matrix cols(p, excluded.size());
                for (std::size_t c = 0; c < excluded.size(); ++c)
                    cols.col(c) = sigma_hat.col(excluded[c]);
                basis = nullspace_basis(cols, excluded);
            }
            const FittedLinking fit = fit_marginal_ml(ff.family, basis.project(pseudo), basis,
                                                      EstimatedCov{sigma_hat, n}, ff.options);
            out.spec = fit.spec;
            out.ok = true;
        } catch (const std::exception& e) {
            out.note = e.what();
        }
        return out;
    };

    std::vector<ResolvedLinking> resolved(p);
    switch (mode.kind) {
        case Mode::Kind::Shared: {
            const ResolvedLinking rl = fit_excluding({});
            for (auto& r : resolved) r = rl;
            break;
        }
        case Mode::Kind::Exact:
            parallel_for(p, threads, [&](int j) {
                if (valid[j]) resolved[j] = fit_excluding({j});
            });
            break;
        case Mode::Kind::Blocked: {
            if (mode.blocks < 2)
                throw std::invalid_argument("fab_asymptotic: blocked mode needs k >= 2");
            const auto blocks = contiguous_blocks(p, mode.blocks);
            parallel_for(static_cast<int>(blocks.size()), threads, [&](int bi) {
                std::vector<int> block;
                for (int j = blocks[bi].first; j < blocks[bi].second; ++j) block.push_back(j);
                const ResolvedLinking rl = fit_excluding(block);
                for (int j : block) resolved[j] = rl;
            });
            break;
        }
    }

    std::vector<FabResult> results(p);
    parallel_for(p, threads, [&](int j) {
        FabResult& r = results[j];
        r.index = j;
        r.mode = mode.kind;
        if (!valid[j]) {
            r.status = ResultStatus::Error;
            r.note = basis_err[j].empty() ? "nonpositive variance estimate" : basis_err[j];
            return;
        }
        r.stat = pseudo(j) / sig(j);
        r.p_umpu = fab_p_normal(r.stat, 0.0);
        r.shift = 0.0;
        if (!resolved[j].ok) {
            r.status = ResultStatus::UmpuFallback;
            r.note = resolved[j].note;
        } else if (!is_diffuse(resolved[j].spec)) {
            try {
                const LinkingMoments lm = linking_moments(resolved[j].spec, p);
                const IndirectMoments im = conditional_moments_projected(
                    lm.mu, lm.psi, sigma_hat, bases[j], bases[j].project(pseudo));
                r.shift = shift_from_moments(im.m_target, im.v_target, sig(j), 0.0);
            } catch (const std::exception& e) {
                r.status = ResultStatus::UmpuFallback;
                r.note = e.what();
                r.shift = 0.0;
            }
        }
        r.p_fab = fab_p_normal(r.stat, r.shift);
    });
    return results;
}

} // namespace fab
