#pragma once

// Asymmetric Laplace primitives. All functions are templated on the scalar so
// the enumeration oracles can run them in extended precision.

#include <lqmix/types.hpp>

#include <cmath>

namespace lqmix {

/// Check loss rho_q(u) = u * (q - 1{u < 0}).
template <typename Scalar>
Scalar check_loss(Scalar u, Scalar q) {
  return u < Scalar(0) ? u * (q - Scalar(1)) : u * q;
}

inline double check_loss(double u, QuantileLevel q) { return check_loss<double>(u, q.value()); }

template <typename Scalar>
struct AldParams {
  Scalar mu = 0;
  Scalar sigma = 1;
  Scalar q = 0.5;
};

/// log f(y) = log[q(1-q)/sigma] - rho_q((y - mu)/sigma).
template <typename Scalar>
Scalar ald_logdensity(Scalar y, Scalar mu, Scalar sigma, Scalar q) {
  if (!(sigma > Scalar(0))) throw DomainError("ALD scale must be positive");
  using std::log;
  return log(q * (Scalar(1) - q) / sigma) - check_loss<Scalar>((y - mu) / sigma, q);
}

template <typename Scalar>
Scalar ald_logdensity(Scalar y, const AldParams<Scalar>& p) {
  return ald_logdensity<Scalar>(y, p.mu, p.sigma, p.q);
}

inline double ald_logdensity(double y, double mu, double sigma, QuantileLevel q) {
  return ald_logdensity<double>(y, mu, sigma, q.value());
}

/// Standard deviation of an ALD with scale sigma and skewness q.
template <typename Scalar>
Scalar ald_sd(Scalar sigma, Scalar q) {
  using std::sqrt;
  return sigma * sqrt(Scalar(1) - Scalar(2) * q + Scalar(2) * q * q) / ((Scalar(1) - q) * q);
}

inline double ald_sd(double sigma, QuantileLevel q) { return ald_sd<double>(sigma, q.value()); }

}  // namespace lqmix
