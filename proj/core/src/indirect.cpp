#include "fab/indirect.hpp"

#include "fab/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fab {

int cov_dim(const CovModel& cov) {
    return std::visit(
        [](const auto& c) -> int {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, DiagonalKnown>) return static_cast<int>(c.sigma2.size());
            else if constexpr (std::is_same_v<T, FullKnown>) return static_cast<int>(c.sigma.rows());
            else if constexpr (std::is_same_v<T, KnownCorrelation>) return static_cast<int>(c.omega.rows());
            else return static_cast<int>(c.sigma_hat.rows());
        },
        cov);
}

Matrix cov_matrix(const CovModel& cov, std::optional<double> sigma2) {
    if (const auto* d = std::get_if<DiagonalKnown>(&cov)) return d->sigma2.asDiagonal();
    if (const auto* f = std::get_if<FullKnown>(&cov)) return f->sigma;
    if (const auto* k = std::get_if<KnownCorrelation>(&cov)) {
        if (!sigma2) throw std::invalid_argument("cov_matrix: KnownCorrelation needs a scale");
        return *sigma2 * k->omega;
    }
    return std::get<EstimatedCov>(cov).sigma_hat;
}

Vector Basis::project(const Vector& y) const {
    if (y.size() != G.rows()) throw std::invalid_argument("Basis::project: dimension mismatch");
    if (!coordinate_basis) return G.transpose() * y;
    if (dropped.empty()) return y;
    Vector out(G.cols());
    int k = 0;
    std::size_t drop = 0;
    for (int i = 0; i < y.size(); ++i) {
        if (drop < dropped.size() && dropped[drop] == i) {
            ++drop;
            continue;
        }
        out(k++) = y(i);
    }
    return out;
}

Matrix Basis::project_columns(const Matrix& m) const {
    if (!coordinate_basis) return G.transpose() * m;
    if (dropped.empty()) return m;
    Matrix out(G.cols(), m.cols());
    int k = 0;
    std::size_t drop = 0;
    for (int i = 0; i < m.rows(); ++i) {
        if (drop < dropped.size() && dropped[drop] == i) {
            ++drop;
            continue;
        }
        out.row(k++) = m.row(i);
    }
    return out;
}

Basis delete_column_basis(int p, int j) { return delete_columns_basis(p, {j}); }

Basis delete_columns_basis(int p, const std::vector<int>& js) {
    if (p < 2) throw std::invalid_argument("delete_columns_basis: dimension must be at least 2");
    std::vector<int> drop(js);
    std::sort(drop.begin(), drop.end());
    drop.erase(std::unique(drop.begin(), drop.end()), drop.end());
    if (drop.empty() || drop.front() < 0 || drop.back() >= p)
        throw std::out_of_range("delete_columns_basis: index out of range");
    if (static_cast<int>(drop.size()) >= p)
        throw std::invalid_argument("delete_columns_basis: nothing left after deletion");

    Basis b;
    b.coordinate_basis = true;
    b.dropped = drop;
    b.target = drop.size() == 1 ? drop.front() : -1;
    b.G = Matrix::Zero(p, p - static_cast<int>(drop.size()));
    int k = 0;
    std::size_t d = 0;
    for (int i = 0; i < p; ++i) {
        if (d < drop.size() && drop[d] == i) {
            ++d;
            continue;
        }
        b.G(i, k++) = 1.0;
    }
    return b;
}

Basis identity_basis(int p) {
    if (p < 1) throw std::invalid_argument("identity_basis: dimension must be positive");
    Basis b;
    b.coordinate_basis = true;
    b.G = Matrix::Identity(p, p);
    return b;
}

namespace {

// Modified Gram-Schmidt with one re-orthogonalization pass.
void orthogonalize_against(Vector& v, const Matrix& q, int n_cols) {
    for (int pass = 0; pass < 2; ++pass) {
        for (int c = 0; c < n_cols; ++c) {
            v -= q.col(c).dot(v) * q.col(c);
        }
    }
}

void sign_normalize(Eigen::Ref<Vector> v) {
    const double scale = v.cwiseAbs().maxCoeff();
    if (scale <= 0.0) return;
    for (int i = 0; i < v.size(); ++i) {
        if (std::fabs(v(i)) > 1e-8 * scale) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

} // namespace

Basis nullspace_basis(const Vector& s, int j) {
    return nullspace_basis(Matrix(s), std::vector<int>{j});
}

Basis nullspace_basis(const Matrix& s_cols, const std::vector<int>& js) {
    const int p = static_cast<int>(s_cols.rows());
    const int d = static_cast<int>(s_cols.cols());
    if (static_cast<int>(js.size()) != d)
        throw std::invalid_argument("nullspace_basis: one coordinate per column expected");
    if (p < d + 1) throw std::invalid_argument("nullspace_basis: dimension too small");
    for (int c = 0; c < d; ++c) {
        const double norm = s_cols.col(c).norm();
        if (!(norm > 0.0)) throw std::domain_error("nullspace_basis: zero column");
        if (std::fabs(s_cols(js[c], c)) <= 1e-14 * norm)
            throw std::domain_error(
                "nullspace_basis: target entry of the covariance column is (numerically) zero");
    }

    // Work matrix holds the s-directions first, then the surviving
    // orthonormalized standard-basis vectors.
    Matrix q(p, p);
    int n_cols = 0;
    for (int c = 0; c < d; ++c) {
        Vector v = s_cols.col(c);
        orthogonalize_against(v, q, n_cols);
        const double norm = v.norm();
        if (norm <= 1e-12 * s_cols.col(c).norm())
            throw ConditioningError("nullspace_basis: covariance columns nearly dependent");
        q.col(n_cols++) = v / norm;
    }

    std::vector<int> skip(js);
    std::sort(skip.begin(), skip.end());
    Basis out;
    out.target = d == 1 ? js[0] : -1;
    out.G.resize(p, p - d);
    int kept = 0;
    for (int k = 0; k < p; ++k) {
        if (std::binary_search(skip.begin(), skip.end(), k)) continue;
        Vector v = Vector::Zero(p);
        v(k) = 1.0;
        orthogonalize_against(v, q, n_cols);
        const double norm = v.norm();
        if (norm <= 1e-10)
            throw ConditioningError("nullspace_basis: basis collapsed during orthogonalization");
        q.col(n_cols) = v / norm;
        out.G.col(kept) = q.col(n_cols);
        sign_normalize(out.G.col(kept));
        ++n_cols;
        ++kept;
    }
    return out;
}

IndirectMoments conditional_moments(const Vector& mu, const Matrix& psi, const Matrix& sigma,
                                    const Basis& basis, const Vector& y) {
    return conditional_moments_projected(mu, psi, sigma, basis, basis.project(y));
}

IndirectMoments conditional_moments_projected(const Vector& mu, const Matrix& psi,
                                              const Matrix& sigma, const Basis& basis,
                                              const Vector& x_proj) {
    const int p = static_cast<int>(mu.size());
    if (psi.rows() != p || sigma.rows() != p || basis.rows() != p || x_proj.size() != basis.cols())
        throw std::invalid_argument("conditional_moments: dimension mismatch");
    if (basis.target < 0) throw std::invalid_argument("conditional_moments: basis has no target");

    const int k = basis.cols();
    // psi_g = psi G; inner = G^T (psi + sigma) G. Selection bases pick
    // rows/columns directly instead of multiplying by 0/1 matrices.
    const Matrix psi_g = basis.project_columns(psi).transpose();
    Matrix inner = basis.project_columns(basis.project_columns(Matrix(psi + sigma)).transpose());
    inner = 0.5 * (inner + inner.transpose());

    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-10 * inner.trace() / k;
        inner.diagonal().array() += jitter;
        llt.compute(inner);
        if (llt.info() != Eigen::Success)
            throw ConditioningError("conditional_moments: inner matrix is not positive definite");
    }

    const Vector resid = x_proj - basis.project(mu);
    IndirectMoments out;
    out.m = mu + psi_g * llt.solve(resid);
    out.V = psi - psi_g * llt.solve(psi_g.transpose());
    out.V = 0.5 * (out.V + out.V.transpose());
    out.m_target = out.m(basis.target);
    out.v_target = out.V(basis.target, basis.target);
    if (!(out.v_target > 0.0))
        throw ConditioningError("conditional_moments: conditional variance is not positive");
    out.shift = 2.0 * out.m_target * std::sqrt(sigma(basis.target, basis.target)) / out.v_target;
    return out;
}

} // namespace fab
