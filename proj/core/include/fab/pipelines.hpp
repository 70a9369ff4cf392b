#pragma once

#include "fab/indirect.hpp"
#include "fab/linking.hpp"

#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fab {

// How linking-model parameters are estimated across hypotheses.
//   Exact:   refit for every j on data excluding coordinate j (the shift is
//            measurable with respect to the indirect projection only).
//   Blocked: contiguous blocks; the fit for j uses the complement of j's
//            entire block. blocks == p reduces to Exact.
//   Shared:  one fit on the whole vector; approximate independence.
struct Mode {
    enum class Kind { Exact, Blocked, Shared };
    Kind kind = Kind::Exact;
    int blocks = 0;

    static Mode exact() { return {Kind::Exact, 0}; }
    static Mode blocked(int k) { return {Kind::Blocked, k}; }
    static Mode shared() { return {Kind::Shared, 0}; }
};

std::string mode_name(Mode::Kind kind);

// [begin, end) index ranges of k contiguous blocks covering 0..p-1.
std::vector<std::pair<int, int>> contiguous_blocks(int p, int k);

// Linking choice for a pipeline: either fit a family per the mode, or use a
// fixed spec as-is (a diffuse Exchangeable reproduces the UMPU p-values).
struct FitFamily {
    LinkingFamily family;
    FitOptions options = {};
};
struct FixedLinking {
    LinkingSpec spec;
    std::optional<double> sigma2;
};
using LinkingChoice = std::variant<FitFamily, FixedLinking>;

enum class ResultStatus { Ok, UmpuFallback, Error };

struct FabResult {
    int index = -1;
    double stat = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> df;      // empty for z-based pipelines
    double shift = 0.0;            // fitted b~_j
    double p_fab = std::numeric_limits<double>::quiet_NaN();
    double p_umpu = std::numeric_limits<double>::quiet_NaN();
    Mode::Kind mode = Mode::Kind::Exact;
    ResultStatus status = ResultStatus::Ok;
    std::string note;
};

// Normal means with known covariance (diagonal or full):
// z_j = (y_j - null_j)/sigma_j, shift from the fitted linking model's
// conditional moments, p = fab_p_normal(z_j, b~_j). Fit or conditioning
// failures fall back to the UMPU p-value per hypothesis.
std::vector<FabResult> fab_means_z(const Vector& y, const CovModel& cov,
                                   const LinkingChoice& linking, const Mode& mode,
                                   const Vector& null_values, int threads = 1);

// Group means with estimated scales: t_j = (ybar_j - null_j)/(s_j/sqrt(n_j)),
// df n_j - 1, shift from the leave-one-out Fay-Herriot fit:
// b~_j = 2 (x_j^T beta~ - null_j) (sigma~/sqrt(n_j)) / tau~2. Groups with
// n_j < 2 or s_j <= 0 are reported as per-group errors.
std::vector<FabResult> fab_means_t(const Vector& ybar, const Vector& s2, const Vector& n,
                                   const Matrix& X, const Vector& null_values, const Mode& mode,
                                   int threads = 1);
std::vector<FabResult> fab_means_t(const Vector& ybar, const Vector& s2, const Vector& n,
                                   const Matrix& X, double null_value, const Mode& mode,
                                   int threads = 1);

// OLS regression coefficients: T_j = beta_hat_j / (sqrt(omega_jj) sigma_hat),
// indirect information from the null space of column j of (X^T X)^{-1},
// marginal fit of (mu, tau2, sigma2) from G^T beta_hat.
std::vector<FabResult> fab_lm(const Matrix& X, const Vector& y, const LinkingChoice& linking,
                              const Mode& mode, int threads = 1);

// Same with nuisance design W: p-values for the X coefficients only, with
// Omega the X-block of ([W X]^T [W X])^{-1}.
std::vector<FabResult> fab_lm_partial(const Matrix& W, const Matrix& X, const Vector& y,
                                      const LinkingChoice& linking, const Mode& mode,
                                      int threads = 1);

// Asymptotically normal estimates: Z_j = sqrt(n) theta_hat_j / sigma_hat_j,
// basis from the Gram-Schmidt null space of column j of Sigma_hat, linking
// model fitted to sqrt(n)-scaled pseudo-data (scale equivariance keeps the
// shift well-defined), b~_j = 2 m~_j sigma_hat_j / v~_jj.
std::vector<FabResult> fab_asymptotic(const Vector& theta_hat, const Matrix& sigma_hat, double n,
                                      const LinkingChoice& linking, const Mode& mode,
                                      int threads = 1);

// Shift for one regression coefficient computed from the projected estimate
// vector only; fab_lm routes through this, and the exact-mode measurability
// test calls it directly.
double lm_coefficient_shift(int j, const Basis& basis, const Vector& beta_proj,
                            const Matrix& omega, const LinkingChoice& linking);

} // namespace fab
