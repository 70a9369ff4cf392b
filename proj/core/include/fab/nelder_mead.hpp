#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace fab {

struct SimplexOptions {
    double ftol = 1e-9;     // stop when max-min objective over the simplex is below this
    int max_iter = 0;       // 0 -> 400 * dimension
    double init_step = 0.5; // initial simplex edge length per coordinate
};

struct SimplexResult {
    Eigen::VectorXd x;
    double fmin = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    int evaluations = 0;
};

// Derivative-free Nelder-Mead minimization. Infeasible points may return
// +infinity; the simplex contracts away from them.
template <class F>
SimplexResult nelder_mead(F&& f, const Eigen::VectorXd& x0, const SimplexOptions& opts = {}) {
    const int n = static_cast<int>(x0.size());
    const int max_iter = opts.max_iter > 0 ? opts.max_iter : 400 * std::max(n, 1);
    constexpr double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

    SimplexResult out;
    std::vector<Eigen::VectorXd> pts(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (int i = 0; i < n; ++i) pts[i + 1](i) += opts.init_step;
    for (int i = 0; i <= n; ++i) {
        fv[i] = f(pts[i]);
        ++out.evaluations;
    }

    std::vector<int> ord(n + 1);
    for (int it = 0; it < max_iter; ++it) {
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = ord[0], worst = ord[n], second = ord[n > 0 ? n - 1 : 0];
        out.iterations = it;

        const double spread = fv[worst] - fv[best];
        if (std::isfinite(fv[best]) && spread < opts.ftol) {
            out.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += pts[i];
        centroid /= std::max(n, 1);

        Eigen::VectorXd xr = centroid + alpha * (centroid - pts[worst]);
        double fr = f(xr);
        ++out.evaluations;

        if (fr < fv[best]) {
            Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
            double fe = f(xe);
            ++out.evaluations;
            if (fe < fr) {
                pts[worst] = std::move(xe);
                fv[worst] = fe;
            } else {
                pts[worst] = std::move(xr);
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            pts[worst] = std::move(xr);
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            Eigen::VectorXd xc;
            if (outside) xc = centroid + rho * (xr - centroid);
            else xc = centroid - rho * (centroid - pts[worst]);
            double fc = f(xc);
            ++out.evaluations;
            if (fc < std::min(fr, fv[worst])) {
                pts[worst] = std::move(xc);
                fv[worst] = fc;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    pts[i] = pts[best] + shrink * (pts[i] - pts[best]);
                    fv[i] = f(pts[i]);
                    ++out.evaluations;
                }
            }
        }
    }

    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    out.x = pts[best];
    out.fmin = fv[best];
    return out;
}

} // namespace fab
