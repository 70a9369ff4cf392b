#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

namespace fab {

struct RootResult {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
};

// Finds a zero of f on [lo, hi], where f(lo) and f(hi) have opposite signs.
// Alternates secant proposals with plain bisection so the bracket is
// guaranteed to halve every other iteration. Terminates when the bracket
// width falls below xtol or the residual hits zero exactly.
template <class F>
RootResult find_root_bracketed(F&& f, double lo, double hi, double xtol, int max_iter = 300) {
    if (!(lo < hi)) throw std::invalid_argument("find_root_bracketed: empty bracket");
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return {lo, 0.0, 0};
    if (fhi == 0.0) return {hi, 0.0, 0};
    if (std::signbit(flo) == std::signbit(fhi)) {
        throw std::invalid_argument("find_root_bracketed: f(lo) and f(hi) have the same sign");
    }

    double x = 0.5 * (lo + hi);
    int it = 0;
    while (it < max_iter) {
        const double fx = f(x);
        ++it;
        if (fx == 0.0) return {x, fx, it};
        if (std::signbit(fx) == std::signbit(flo)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        if (hi - lo <= xtol) break;
        if (it % 2 == 0) {
            x = 0.5 * (lo + hi);
        } else {
            double cand = lo - flo * (hi - lo) / (fhi - flo);
            if (!std::isfinite(cand) || cand <= lo || cand >= hi) cand = 0.5 * (lo + hi);
            x = cand;
        }
    }
    const double mid = 0.5 * (lo + hi);
    return {mid, f(mid), it};
}

} // namespace fab
