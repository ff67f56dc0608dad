#include <lqmix/stats.hpp>

#include <lqmix/types.hpp>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>

namespace lqmix {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile requires 0 < p < 1");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double gamma_p(double a, double x) {
  if (a <= 0.0) throw DomainError("gamma_p requires a > 0");
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(a, x);
}

double chi_square_cdf(double x, double df) { return gamma_p(0.5 * df, 0.5 * x); }

double chi_square_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("chi-square quantile requires 0 < p < 1");
  if (df <= 0.0) throw DomainError("chi-square degrees of freedom must be positive");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

}  // namespace lqmix
