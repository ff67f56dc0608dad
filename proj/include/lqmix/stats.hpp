#pragma once

// Scalar distribution helpers used by the simulator and the report.

namespace lqmix {

double normal_cdf(double x);
/// Standard normal quantile.
double normal_quantile(double p);
/// Two-sided normal tail probability 2 * (1 - Phi(|z|)).
double normal_two_sided_p(double z);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
double chi_square_cdf(double x, double df);
double chi_square_quantile(double p, double df);

}  // namespace lqmix
