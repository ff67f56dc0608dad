#pragma once

// Weighted linear quantile regression.
//
// minimize  sum_j w_j * rho_q(y_j - x_j' b)
//
// solved exactly as a linear program by a vertex-to-vertex descent over
// interpolating bases (Barrodale-Roberts style): at each vertex the basis
// holds k rows with zero residual, the 2k edge directions are scored by their
// directional derivative, and the steepest edge is followed with an exact
// weighted-median line search that may cross several vertices at once.
// Once optimal, zero-cost edges that decrease the coefficient vector
// lexicographically are followed so ties resolve to the lexicographically
// smallest optimal vertex.

#include <lqmix/panel.hpp>
#include <lqmix/types.hpp>

#include <cstdint>
#include <optional>

namespace lqmix {

struct WqrProblem {
  MatrixXd design;
  VectorXd response;
  VectorXd weights;
  QuantileLevel q;
};

struct WqrOptions {
  /// Rows with weight below this are dropped.
  double weight_floor = 1e-12;
  /// Optional warm start; the first basis is picked among the rows it fits best.
  std::optional<VectorXd> start;
  int max_pivots = 100000;
};

struct WqrSolution {
  VectorXd coefficients;
  double objective = 0.0;
  int pivots = 0;
};

WqrSolution solve_wqr_detailed(const WqrProblem& problem, const WqrOptions& options = {});

inline VectorXd solve_wqr(const WqrProblem& problem, const WqrOptions& options = {}) {
  return solve_wqr_detailed(problem, options).coefficients;
}

/// Weighted check-loss objective at b.
double wqr_objective(const WqrProblem& problem, const VectorXd& b);

/// Floor applied to every scale estimate before it reaches a log-density.
inline constexpr double kScaleFloor = 1e-8;

struct HomogeneousFit {
  VectorXd coefficients;
  double scale = 1.0;
  double loglik = 0.0;
  std::optional<VectorXd> se;
  int failures = 0;
};

/// Stacks [X Z W] of every unit into a single design; response alongside.
void stack_design(const DesignSet& design, MatrixXd& X, VectorXd& y);

struct LqrOptions {
  bool se = false;
  int R = 50;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Homogeneous linear quantile regression on all observed rows with the
/// [X Z W] columns of design treated as fixed. Bootstrap se resample units.
HomogeneousFit fit_lqr(const DesignSet& design, QuantileLevel q, const LqrOptions& options = {});

}  // namespace lqmix
