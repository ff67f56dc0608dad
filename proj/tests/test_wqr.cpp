#include "support.hpp"

#include <doctest.h>

using namespace lqmix;
using namespace lqmix::testing;

namespace {

WqrProblem intercept_problem(std::vector<double> y, std::vector<double> w, double q) {
  WqrProblem p{MatrixXd::Ones(static_cast<Index>(y.size()), 1),
               Eigen::Map<VectorXd>(y.data(), static_cast<Index>(y.size())),
               Eigen::Map<VectorXd>(w.data(), static_cast<Index>(w.size())), QuantileLevel(q)};
  return p;
}

WqrProblem random_problem(std::mt19937_64& rng, Index n, Index k) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.1, 3.0);
  std::uniform_real_distribution<double> qdist(0.05, 0.95);
  MatrixXd X(n, k);
  X.col(0).setOnes();
  for (Index j = 1; j < k; ++j)
    for (Index i = 0; i < n; ++i) X(i, j) = norm(rng);
  VectorXd beta = VectorXd::NullaryExpr(k, [&] { return norm(rng); });
  VectorXd y = X * beta + VectorXd::NullaryExpr(n, [&] { return 2.0 * norm(rng); });
  VectorXd w = VectorXd::NullaryExpr(n, [&] { return unif(rng); });
  return {X, y, w, QuantileLevel(qdist(rng))};
}

}  // namespace

TEST_SUITE("wqr") {
  TEST_CASE("intercept-only examples") {
    CHECK(solve_wqr(intercept_problem({1, 2, 3}, {1, 1, 1}, 0.5))(0) == 2.0);
    CHECK(solve_wqr(intercept_problem({0, 10}, {3, 1}, 0.5))(0) == 0.0);
    CHECK(solve_wqr(intercept_problem({5, 5, 5, 5}, {1, 2, 3, 4}, 0.3))(0) == 5.0);
  }

  TEST_CASE("exact affine response gives zero objective") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.2, 2.0);
    MatrixXd X(12, 2);
    VectorXd y(12), w(12);
    for (Index i = 0; i < 12; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = static_cast<double>(i) * 0.37 - 1.0;
      y(i) = 1.5 - 2.25 * X(i, 1);
      w(i) = unif(rng);
    }
    for (const double q : {0.1, 0.5, 0.9}) {
      const auto sol = solve_wqr_detailed({X, y, w, QuantileLevel(q)});
      CHECK(sol.coefficients(0) == doctest::Approx(1.5).epsilon(1e-12));
      CHECK(sol.coefficients(1) == doctest::Approx(-2.25).epsilon(1e-12));
      CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-12));
    }
  }

  TEST_CASE("weighted quantile oracle on random intercept-only problems") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
      const Index n = 1 + static_cast<Index>(rep % 23);
      VectorXd y = VectorXd::NullaryExpr(n, [&] { return std::floor(10.0 * unif(rng)); });
      VectorXd w = VectorXd::Ones(n);
      if (rep % 2) w = VectorXd::NullaryExpr(n, [&] { return 0.1 + unif(rng); });
      const double q = rep % 3 == 0 ? 0.5 : 0.05 + 0.9 * unif(rng);
      const double got = solve_wqr({MatrixXd::Ones(n, 1), y, w, QuantileLevel(q)})(0);
      CHECK(got == weighted_quantile_oracle(y, w, q));
    }
  }

  TEST_CASE("matches basis enumeration and passes the subgradient test") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 60; ++rep) {
      const Index k = 1 + rep % 3;
      const Index n = k + 3 + rep % 9;
      const WqrProblem p = random_problem(rng, n, k);
      const auto sol = solve_wqr_detailed(p);
      const double oracle = basis_enumeration_oracle(p.design, p.response, p.weights, p.q);
      CHECK(sol.objective == doctest::Approx(oracle).epsilon(1e-10));
      CHECK(min_coordinate_derivative(p.design, p.response, p.weights, p.q, sol.coefficients) >= -1e-8);
    }
  }

  TEST_CASE("weight scaling leaves the solution unchanged") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
      WqrProblem p = random_problem(rng, 40, 3);
      const VectorXd a = solve_wqr(p);
      p.weights *= 7.25;
      const VectorXd b = solve_wqr(p);
      CHECK(max_abs_diff(a, b) <= 1e-10);
    }
  }

  TEST_CASE("objective dominates least squares") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 20; ++rep) {
      const WqrProblem p = random_problem(rng, 50, 3);
      const VectorXd sw = p.weights.cwiseSqrt();
      const VectorXd ls = (sw.asDiagonal() * p.design).colPivHouseholderQr().solve(sw.asDiagonal() * p.response);
      CHECK(wqr_objective(p, solve_wqr(p)) <= wqr_objective(p, ls) + 1e-12);
    }
  }

  TEST_CASE("warm start reaches the same optimum") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 20; ++rep) {
      const WqrProblem p = random_problem(rng, 30, 2);
      WqrOptions warm;
      warm.start = VectorXd::Constant(2, 3.0);
      CHECK(wqr_objective(p, solve_wqr(p, warm)) == doctest::Approx(wqr_objective(p, solve_wqr(p))).epsilon(1e-12));
    }
  }

  TEST_CASE("degenerate inputs") {
    CHECK_THROWS_AS(solve_wqr(intercept_problem({1, 2}, {0, 0}, 0.5)), DegenerateProblemError);
    MatrixXd X(4, 2);
    X << 1, 2, 1, 2, 1, 2, 1, 2;
    CHECK_THROWS_AS(solve_wqr({X, VectorXd::LinSpaced(4, 0, 3), VectorXd::Ones(4), QuantileLevel(0.5)}),
                    SingularDesignError);
    // Rows below the weight floor do not count.
    const auto sol = solve_wqr(intercept_problem({1, 100, 2, 3}, {1, 1e-15, 1, 1}, 0.5));
    CHECK(sol(0) == 2.0);
  }

  TEST_CASE("homogeneous fit on a constant response") {
    PanelDataset data;
    data.time_grid = {1, 2, 3};
    data.covariate_names = {};
    for (int i = 0; i < 4; ++i) {
      UnitRecord u;
      u.unit_id = std::to_string(i + 1);
      u.times = {0, 1, 2};
      u.y = VectorXd::Constant(3, 4.5);
      u.covariates.resize(3, 0);
      data.units.push_back(u);
    }
    const DesignSet design = build_design(data, {});
    const HomogeneousFit fit = fit_lqr(design, QuantileLevel(0.5));
    CHECK(fit.coefficients(0) == 4.5);
    CHECK(fit.scale == kScaleFloor);
  }

  TEST_CASE("homogeneous fit recovers a symmetric-error median line") {
    MixtureParams truth = intercept_params(Eigen::Vector2d(0.0, 2.0), VectorXd(), VectorXd::Ones(1),
                                           VectorXd(), VectorXd::Ones(1), MatrixXd::Ones(1, 1), 1.0);
    GeneratorSpec gen = intercept_generator(Variant::homogeneous, truth, 300, 5, 21, 0.5, 1);
    gen.roles.fixed_intercept = true;
    gen.error_law = ErrorLaw::gaussian;
    const auto [data, latent] = simulate(gen);
    const DesignSet design = build_design(data, gen.roles);
    const HomogeneousFit fit = fit_lqr(design, QuantileLevel(0.5));
    // Independent LP check on the same sample.
    MatrixXd X;
    VectorXd y;
    stack_design(design, X, y);
    const double oracle_obj = wqr_objective({X, y, VectorXd::Ones(y.size()), QuantileLevel(0.5)}, fit.coefficients);
    CHECK(min_coordinate_derivative(X, y, VectorXd::Ones(y.size()), 0.5, fit.coefficients) >= -1e-8);
    CHECK(oracle_obj / static_cast<double>(y.size()) == doctest::Approx(fit.scale).epsilon(1e-12));
    CHECK(std::abs(fit.coefficients(1) - 2.0) < 0.2);
    CHECK(std::abs(fit.coefficients(0)) < 0.15);
  }

  TEST_CASE("homogeneous bootstrap se is deterministic") {
    MixtureParams truth = intercept_params(Eigen::Vector2d(0.5, 1.0), VectorXd(), VectorXd::Ones(1),
                                           VectorXd(), VectorXd::Ones(1), MatrixXd::Ones(1, 1), 1.0);
    GeneratorSpec gen = intercept_generator(Variant::homogeneous, truth, 60, 4, 8, 0.5, 1);
    gen.roles.fixed_intercept = true;
    const auto [data, latent] = simulate(gen);
    const DesignSet design = build_design(data, gen.roles);
    LqrOptions opt;
    opt.se = true;
    opt.R = 20;
    opt.seed = 99;
    const auto a = fit_lqr(design, QuantileLevel(0.5), opt);
    opt.workers = 3;
    const auto b = fit_lqr(design, QuantileLevel(0.5), opt);
    REQUIRE(a.se);
    REQUIRE(b.se);
    CHECK((*a.se - *b.se).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.se->array() > 0).all());
  }
}
