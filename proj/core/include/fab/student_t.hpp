#pragma once

namespace fab {

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation, absolute accuracy around 1e-13.
double reg_inc_beta(double a, double b, double x);

// CDF / survival / density of the t distribution with nu >= 1 degrees of
// freedom (nu need not be an integer). The survival function is evaluated
// directly so both tails retain relative accuracy.
double student_t_cdf(double t, double nu);
double student_t_sf(double t, double nu);
double student_t_pdf(double t, double nu);

} // namespace fab
