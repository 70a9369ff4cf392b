#include "fab/studies.hpp"

#include "fab/errors.hpp"
#include "fab/logistic.hpp"
#include "fab/multiplicity.hpp"
#include "fab/pvalue.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
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

constexpr double kStates[3] = {-1.0, 0.0, 1.0};

} // namespace

Eigen::Vector3d stationary_distribution(const Eigen::Matrix3d& transition) {
    // Solve pi^T P = pi^T with sum(pi) = 1 via the bordered linear system.
    Eigen::Matrix3d a = transition.transpose() - Eigen::Matrix3d::Identity();
    a.row(2) = Eigen::RowVector3d::Ones();
    const Eigen::Vector3d rhs(0.0, 0.0, 1.0);
    Eigen::Vector3d pi = a.fullPivLu().solve(rhs);
    pi = pi.cwiseMax(0.0);
    return pi / pi.sum();
}

HmmSpec HmmSpec::defaults(int p) {
    // Middle-state self-transition is the row-sum complement of the two
    // 0.010 exit probabilities. The stationary null share depends only on
    // the exit ratio 0.010/0.025, i.e. pi_0 = 5/9.
    HmmSpec spec;
    spec.p = p;
    spec.transition << 0.975, 0.025, 0.000,
                       0.010, 0.980, 0.010,
                       0.000, 0.025, 0.975;
    spec.initial = stationary_distribution(spec.transition);
    return spec;
}

void HmmSpec::validate() const {
    if (p < 2) throw std::invalid_argument("HmmSpec: chain length must be at least 2");
    for (int i = 0; i < 3; ++i) {
        if (std::fabs(transition.row(i).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("HmmSpec: transition rows must sum to 1");
        for (int j = 0; j < 3; ++j) {
            if (transition(i, j) < 0.0)
                throw std::invalid_argument("HmmSpec: transition entries must be nonnegative");
        }
    }
    if (std::fabs(initial.sum() - 1.0) > 1e-12 || (initial.array() < 0.0).any())
        throw std::invalid_argument("HmmSpec: initial distribution must be a probability vector");
}

HmmStudyResult run_hmm_study(const HmmStudyConfig& config) {
    config.hmm.validate();
    const int p = config.hmm.p;
    const int d = config.datasets;
    if (d < 1) throw std::invalid_argument("run_hmm_study: needs at least one dataset");

    std::vector<std::string> methods = {"umpu"};
    if (config.run_exact) methods.push_back("fab_exact");
    if (config.run_shared) methods.push_back("fab_shared");
    const int n_methods = static_cast<int>(methods.size());

    const CounterRng root(config.seed);
    std::vector<StudyRow> rows(static_cast<std::size_t>(d) * n_methods);

    parallel_for(d, config.threads, [&](int ds) {
        const CounterRng rng = root.substream(ds);
        const CounterRng chain_rng = rng.substream(0);
        const CounterRng noise_rng = rng.substream(1);

        // Markov signal and observed data.
        Vector theta(p), y(p);
        std::vector<bool> is_null(p);
        int state = chain_rng.categorical(0, {config.hmm.initial.data(), 3});
        for (int j = 0; j < p; ++j) {
            if (j > 0) {
                const Eigen::Vector3d row = config.hmm.transition.row(state).transpose();
                state = chain_rng.categorical(j, {row.data(), 3});
            }
            theta(j) = kStates[state];
            is_null[j] = state == 1;
            y(j) = theta(j) + noise_rng.normal(j);
        }
        const int n_null = static_cast<int>(std::count(is_null.begin(), is_null.end(), true));

        const Vector ones_var = Vector::Ones(p);
        const Vector nulls = Vector::Zero(p);
        const LinkingChoice car{FitFamily{LinkingFamily::car_path()}};

        for (int mi = 0; mi < n_methods; ++mi) {
            const std::string& method = methods[mi];
            std::vector<double> pvals(p);
            if (method == "umpu") {
                for (int j = 0; j < p; ++j) pvals[j] = fab_p_normal(y(j), 0.0);
            } else {
                const Mode mode = method == "fab_exact" ? Mode::exact() : Mode::shared();
                const auto res =
                    fab_means_z(y, DiagonalKnown{ones_var}, car, mode, nulls, 1);
                for (int j = 0; j < p; ++j) pvals[j] = res[j].p_fab;
            }
            const MultiplicityReport rep = bh_reject(pvals, config.q, is_null);
            StudyRow& row = rows[static_cast<std::size_t>(ds) * n_methods + mi];
            row.dataset = ds;
            row.method = method;
            row.n_null = n_null;
            row.discoveries = static_cast<int>(rep.rejected.size());
            row.fdp = *rep.fdp;
            row.tpp = *rep.tpp;
        }
    });

    HmmStudyResult out;
    out.rows = std::move(rows);
    for (int mi = 0; mi < n_methods; ++mi) {
        MethodSummary s;
        s.method = methods[mi];
        for (int ds = 0; ds < d; ++ds) {
            const StudyRow& row = out.rows[static_cast<std::size_t>(ds) * n_methods + mi];
            s.mean_n_null += row.n_null;
            s.mean_discoveries += row.discoveries;
            s.mean_fdp += row.fdp;
            s.mean_tpp += row.tpp;
        }
        s.mean_n_null /= d;
        s.mean_discoveries /= d;
        s.mean_fdp /= d;
        s.mean_tpp /= d;
        out.summary.push_back(s);
        if (methods[mi] != "umpu") {
            int count = 0;
            for (int ds = 0; ds < d; ++ds) {
                const double tpp_umpu = out.rows[static_cast<std::size_t>(ds) * n_methods].tpp;
                const double tpp_m = out.rows[static_cast<std::size_t>(ds) * n_methods + mi].tpp;
                if (tpp_m >= tpp_umpu) ++count;
            }
            out.tpp_ge_umpu[methods[mi]] = count;
        }
    }
    return out;
}

std::vector<GlmStudyRow> run_glm_study(const GlmStudyConfig& config) {
    const int p = config.p;
    if (config.n_nonnull < 0 || config.n_nonnull > p)
        throw std::invalid_argument("run_glm_study: bad non-null count");

    std::vector<GlmStudyRow> out;
    const CounterRng root(config.seed);

    for (std::size_t ni = 0; ni < config.sample_sizes.size(); ++ni) {
        const int n = config.sample_sizes[ni];
        const double coef = config.signal / std::sqrt(static_cast<double>(n));
        const CounterRng size_rng = root.substream(ni);

        struct RepCounts {
            double nonnull_small[2] = {0.0, 0.0}; // wald, fab
            double null_small[2] = {0.0, 0.0};
            int used = 0;
            int skipped = 0;
        };
        std::vector<RepCounts> per_rep(config.replicates);

        parallel_for(config.replicates, config.threads, [&](int rep) {
            const CounterRng rng = size_rng.substream(rep);
            const CounterRng x_rng = rng.substream(0);
            const CounterRng y_rng = rng.substream(1);

            Matrix x(n, p);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < p; ++j)
                    x(i, j) = x_rng.normal(static_cast<std::uint64_t>(i) * p + j);
            }
            Vector theta = Vector::Zero(p);
            theta.head(config.n_nonnull).setConstant(coef);
            const Vector eta = x * theta;
            Vector y(n);
            for (int i = 0; i < n; ++i) {
                const double prob = 1.0 / (1.0 + std::exp(-eta(i)));
                y(i) = y_rng.uniform(i) < prob ? 1.0 : 0.0;
            }

            RepCounts& rc = per_rep[rep];
            try {
                const GlmFit fit = fit_logistic(x, y);
                const LinkingChoice ss{FitFamily{LinkingFamily::spike_slab()}};
                const auto res =
                    fab_asymptotic(fit.theta_hat, fit.sigma_hat, n, ss, Mode::exact(), 1);
                for (int j = 0; j < p; ++j) {
                    if (res[j].status == ResultStatus::Error) throw FitError("coefficient failed");
                    const bool nonnull = j < config.n_nonnull;
                    const double pw = res[j].p_umpu;
                    const double pf = res[j].p_fab;
                    if (nonnull) {
                        rc.nonnull_small[0] += pw < config.alpha ? 1.0 : 0.0;
                        rc.nonnull_small[1] += pf < config.alpha ? 1.0 : 0.0;
                    } else {
                        rc.null_small[0] += pw < config.alpha ? 1.0 : 0.0;
                        rc.null_small[1] += pf < config.alpha ? 1.0 : 0.0;
                    }
                }
                rc.used = 1;
            } catch (const FitError&) {
                rc.skipped = 1;
            } catch (const RankError&) {
                rc.skipped = 1;
            }
        });

        double nonnull_small[2] = {0.0, 0.0};
        double null_small[2] = {0.0, 0.0};
        int used = 0, skipped = 0;
        for (const auto& rc : per_rep) {
            used += rc.used;
            skipped += rc.skipped;
            for (int m = 0; m < 2; ++m) {
                nonnull_small[m] += rc.nonnull_small[m];
                null_small[m] += rc.null_small[m];
            }
        }
        const double n_nonnull_total = std::max(1.0, static_cast<double>(used) * config.n_nonnull);
        const double n_null_total = std::max(1.0, static_cast<double>(used) * (p - config.n_nonnull));
        const char* names[2] = {"wald", "fab"};
        for (int m = 0; m < 2; ++m) {
            GlmStudyRow row;
            row.n = n;
            row.method = names[m];
            row.frac_nonnull_small = nonnull_small[m] / n_nonnull_total;
            row.frac_null_small = null_small[m] / n_null_total;
            row.replicates_used = used;
            row.skipped = skipped;
            out.push_back(row);
        }
    }
    return out;
}

} // namespace fab
