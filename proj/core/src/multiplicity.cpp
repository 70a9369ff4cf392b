#include "fab/multiplicity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fab {

MultiplicityReport bh_reject(const std::vector<double>& pvals, double q) {
    if (!(q > 0.0) || !(q < 1.0)) throw std::domain_error("bh_reject: q must be in (0, 1)");
    MultiplicityReport out;
    out.q = q;
    const int m = static_cast<int>(pvals.size());
    if (m == 0) return out;
    for (double p : pvals) {
        if (!(p > 0.0) || p > 1.0 || std::isnan(p))
            throw std::domain_error("bh_reject: p-values must lie in (0, 1]");
    }

    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pvals[a] < pvals[b]; });

    double threshold = 0.0;
    for (int i = m; i >= 1; --i) {
        if (pvals[order[i - 1]] <= q * i / m) {
            threshold = pvals[order[i - 1]];
            break;
        }
    }
    if (threshold > 0.0) {
        for (int j = 0; j < m; ++j) {
            if (pvals[j] <= threshold) out.rejected.push_back(j);
        }
    }
    out.threshold = threshold;
    return out;
}

MultiplicityReport bh_reject(const std::vector<double>& pvals, double q,
                             const std::vector<bool>& is_null) {
    if (is_null.size() != pvals.size())
        throw std::invalid_argument("bh_reject: truth vector length mismatch");
    MultiplicityReport out = bh_reject(pvals, q);
    const auto [fdp, tpp] = fdp_tpp(out.rejected, is_null);
    out.fdp = fdp;
    out.tpp = tpp;
    return out;
}

std::pair<double, double> fdp_tpp(const std::vector<int>& rejected,
                                  const std::vector<bool>& is_null) {
    int false_pos = 0, true_pos = 0;
    for (int j : rejected) {
        if (j < 0 || j >= static_cast<int>(is_null.size()))
            throw std::out_of_range("fdp_tpp: rejected index out of range");
        if (is_null[j]) ++false_pos;
        else ++true_pos;
    }
    const int non_null = static_cast<int>(std::count(is_null.begin(), is_null.end(), false));
    const double fdp = static_cast<double>(false_pos) /
                       std::max<int>(static_cast<int>(rejected.size()), 1);
    const double tpp = static_cast<double>(true_pos) / std::max(non_null, 1);
    return {fdp, tpp};
}

double ks_statistic(std::vector<double> pvals) {
    if (pvals.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(pvals.begin(), pvals.end());
    const int n = static_cast<int>(pvals.size());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, static_cast<double>(i + 1) / n - pvals[i]);
        d = std::max(d, pvals[i] - static_cast<double>(i) / n);
    }
    return d;
}

} // namespace fab
