#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace fab {

struct MultiplicityReport {
    std::vector<int> rejected;   // indices of rejected hypotheses, ascending
    double threshold = 0.0;      // largest rejected p-value (0 when none)
    double q = 0.0;              // target false discovery rate
    std::optional<double> fdp;   // filled in when truth is supplied
    std::optional<double> tpp;
};

// Benjamini-Hochberg step-up at target rate q: reject all p-values at or
// below the largest p_(i) with p_(i) <= i q / m. Ties at the boundary are
// all rejected.
MultiplicityReport bh_reject(const std::vector<double>& pvals, double q);
// Same, with the realized fdp and tpp filled in from the truth vector.
MultiplicityReport bh_reject(const std::vector<double>& pvals, double q,
                             const std::vector<bool>& is_null);

// Realized false-discovery and true-positive proportions.
// is_null[j] marks hypotheses whose null is actually true.
// fdp = |rejected ∩ nulls| / max(|rejected|, 1);
// tpp = |rejected ∩ non-nulls| / max(#non-nulls, 1).
std::pair<double, double> fdp_tpp(const std::vector<int>& rejected,
                                  const std::vector<bool>& is_null);

// Sup distance between the empirical CDF of the values and the uniform CDF.
double ks_statistic(std::vector<double> pvals);

} // namespace fab
