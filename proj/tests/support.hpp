#pragma once

// Shared test fixtures and independent oracles. Nothing here calls into the
// estimator code paths it is used to check.

#include <lqmix/ald.hpp>
#include <lqmix/em.hpp>
#include <lqmix/simulate.hpp>
#include <lqmix/wqr.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace lqmix::testing {

/// Smallest y_(k) whose cumulative weight reaches q * total.
inline double weighted_quantile_oracle(const VectorXd& y, const VectorXd& w, double q) {
  std::vector<Index> order(static_cast<std::size_t>(y.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return y(a) < y(b); });
  const double total = w.sum();
  double acc = 0.0;
  for (const Index i : order) {
    acc += w(i);
    if (acc >= q * total) return y(i);
  }
  return y(order.back());
}

inline double objective_oracle(const MatrixXd& X, const VectorXd& y, const VectorXd& w, double q,
                               const VectorXd& beta) {
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double u = y(i) - X.row(i).dot(beta);
    total += w(i) * u * (q - (u < 0 ? 1.0 : 0.0));
  }
  return total;
}

/// Minimum of the weighted check loss over every interpolating basis (all
/// k-subsets of rows with a nonsingular submatrix). Exact for small n.
inline double basis_enumeration_oracle(const MatrixXd& X, const VectorXd& y, const VectorXd& w, double q) {
  const Index n = X.rows(), k = X.cols();
  std::vector<Index> pick(static_cast<std::size_t>(k));
  std::iota(pick.begin(), pick.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    MatrixXd A(k, k);
    VectorXd b(k);
    for (Index j = 0; j < k; ++j) {
      A.row(j) = X.row(pick[static_cast<std::size_t>(j)]);
      b(j) = y(pick[static_cast<std::size_t>(j)]);
    }
    Eigen::FullPivLU<MatrixXd> lu(A);
    if (lu.isInvertible()) best = std::min(best, objective_oracle(X, y, w, q, lu.solve(b)));
    Index j = k - 1;
    while (j >= 0 && pick[static_cast<std::size_t>(j)] == n - k + j) --j;
    if (j < 0) break;
    ++pick[static_cast<std::size_t>(j)];
    for (Index t = j + 1; t < k; ++t) pick[static_cast<std::size_t>(t)] = pick[static_cast<std::size_t>(t - 1)] + 1;
  }
  return best;
}

/// One-sided derivative of the weighted check loss at beta along d.
inline double directional_derivative(const MatrixXd& X, const VectorXd& y, const VectorXd& w, double q,
                                     const VectorXd& beta, const VectorXd& d, double zero_tol) {
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double r = y(i) - X.row(i).dot(beta);
    const double s = -X.row(i).dot(d);  // rate of change of the residual
    if (std::abs(r) <= zero_tol) {
      total += w(i) * (s > 0 ? q * s : (q - 1.0) * s);
    } else {
      total += w(i) * s * (q - (r < 0 ? 1.0 : 0.0));
    }
  }
  return total;
}

/// Smallest directional derivative over +-e_j for every coordinate j.
inline double min_coordinate_derivative(const MatrixXd& X, const VectorXd& y, const VectorXd& w, double q,
                                        const VectorXd& beta) {
  const double zero_tol = 1e-9 * (1.0 + y.cwiseAbs().maxCoeff());
  double worst = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < X.cols(); ++j)
    for (const double sign : {1.0, -1.0}) {
      VectorXd d = VectorXd::Zero(X.cols());
      d(j) = sign;
      worst = std::min(worst, directional_derivative(X, y, w, q, beta, d, zero_tol));
    }
  return worst;
}

inline VectorXd random_simplex(Index k, std::mt19937_64& rng, double floor = 0.05) {
  std::gamma_distribution<double> gam(1.0, 1.0);
  VectorXd p(k);
  for (Index j = 0; j < k; ++j) p(j) = floor + gam(rng);
  return p / p.sum();
}

inline MixtureParams random_params(Index p, Index r, Index l, Index G, Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  MixtureParams out;
  out.betaf = VectorXd::NullaryExpr(p, [&] { return norm(rng); });
  out.betarTC = MatrixXd::NullaryExpr(G, r, [&] { return 2.0 * norm(rng); });
  out.betarTV = MatrixXd::NullaryExpr(m, l, [&] { return 2.0 * norm(rng); });
  out.pg = random_simplex(G, rng);
  out.delta = random_simplex(m, rng);
  out.Gamma.resize(m, m);
  for (Index h = 0; h < m; ++h) out.Gamma.row(h) = random_simplex(m, rng).transpose();
  out.scale = unif(rng);
  return out;
}

/// Params with intercept locations for TC and/or TV blocks and one fixed slope.
inline MixtureParams intercept_params(const VectorXd& betaf, const VectorXd& tc, const VectorXd& pg,
                                      const VectorXd& tv, const VectorXd& delta, const MatrixXd& Gamma,
                                      double scale) {
  MixtureParams out;
  out.betaf = betaf;
  out.betarTC = tc.size() > 0 ? MatrixXd(tc) : MatrixXd(pg.size(), 0);
  out.betarTV = tv.size() > 0 ? MatrixXd(tv) : MatrixXd(delta.size(), 0);
  out.pg = pg;
  out.delta = delta;
  out.Gamma = Gamma;
  out.scale = scale;
  return out;
}

/// Generator for a panel with uniform fixed covariates x1, x2, ... and random
/// intercepts. With both TC and TV blocks the TC coefficient is a slope on z.
inline GeneratorSpec intercept_generator(Variant variant, const MixtureParams& truth, Index n, Index T,
                                         std::uint64_t seed, double scale, Index covariates = -1) {
  GeneratorSpec gen;
  gen.variant = variant;
  gen.true_params = truth;
  gen.n = n;
  gen.T = T;
  for (Index j = 0; j < (covariates < 0 ? truth.p() : covariates); ++j)
    gen.covariates.push_back({"x" + std::to_string(j + 1), CovariateLaw::uniform});
  for (const auto& c : gen.covariates) gen.roles.fixed.push_back(c.name);
  if (truth.r() > 0 && truth.l() > 0) {
    gen.covariates.push_back({"z", CovariateLaw::uniform});
    gen.roles.random_tc = {"z"};
  } else if (truth.r() > 0) {
    gen.roles.random_tc = {"intercept"};
  }
  if (truth.l() > 0) gen.roles.random_tv = {"intercept"};
  gen.roles.fixed_intercept = false;
  gen.error_law = ErrorLaw::ald;
  gen.error_scale = scale;
  gen.seed = seed;
  return gen;
}

inline ModelSpec model_spec(Variant variant, Index G, Index m, double q = 0.5) {
  ModelSpec spec;
  spec.variant = variant;
  spec.q = QuantileLevel(q);
  spec.G = G;
  spec.m = m;
  return spec;
}

/// Largest absolute elementwise difference.
inline double max_abs_diff(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace lqmix::testing
