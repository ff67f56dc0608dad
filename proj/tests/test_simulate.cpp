#include "support.hpp"

#include <lqmix/stats.hpp>

#include <doctest.h>

using namespace lqmix;
using namespace lqmix::testing;

namespace {

MixtureParams tv_truth() {
  return intercept_params(VectorXd::Constant(1, 1.0), VectorXd(), VectorXd::Ones(1), Eigen::Vector2d(-1, 1),
                          Eigen::Vector2d(0.7, 0.3), (MatrixXd(2, 2) << 0.9, 0.1, 0.1, 0.9).finished(), 0.5);
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("zero error scale reproduces the location") {
    GeneratorSpec gen = intercept_generator(Variant::tv, tv_truth(), 20, 4, 3, 0.0);
    const auto [data, truth] = simulate(gen);
    for (std::size_t i = 0; i < data.units.size(); ++i)
      for (Index t = 0; t < data.units[i].size(); ++t) CHECK(data.units[i].y(t) == truth.location[i](t));
  }

  TEST_CASE("identity transitions freeze the path") {
    MixtureParams p = tv_truth();
    p.Gamma.setIdentity();
    const auto [data, truth] = simulate(intercept_generator(Variant::tv, p, 50, 6, 4, 1.0));
    for (const auto& path : truth.states)
      CHECK(std::all_of(path.begin(), path.end(), [&](Index s) { return s == path.front(); }));
  }

  TEST_CASE("fixed seed repeats exactly") {
    GeneratorSpec gen = intercept_generator(Variant::tv, tv_truth(), 30, 5, 5, 1.0);
    gen.gap_probability = 0.2;
    const auto a = simulate(gen);
    const auto b = simulate(gen);
    CHECK(to_csv(a.first) == to_csv(b.first));
    CHECK(a.second.states == b.second.states);
    gen.seed = 6;
    CHECK(to_csv(simulate(gen).first) != to_csv(a.first));
  }

  TEST_CASE("drop rules") {
    GeneratorSpec gen = intercept_generator(Variant::tv, tv_truth(), 200, 6, 7, 1.0);
    gen.dropout_hazard = 0.2;
    CHECK(classify_missingness(simulate(gen).first) == MissingPattern::monotone);
    gen.dropout_hazard = 0.0;
    gen.gap_probability = 0.25;
    CHECK(classify_missingness(simulate(gen).first) == MissingPattern::non_monotone);
  }

  TEST_CASE("error laws have zero q-quantile") {
    for (const auto law : {ErrorLaw::ald, ErrorLaw::gaussian, ErrorLaw::chi_square})
      for (const double q : {0.25, 0.5, 0.9}) {
        Rng rng(static_cast<std::uint64_t>(q * 1000) + static_cast<std::uint64_t>(law));
        const int n = 40000;
        int below = 0;
        for (int k = 0; k < n; ++k) below += draw_error(law, 1.7, q, 3.0, rng) < 0.0 ? 1 : 0;
        const double se = std::sqrt(q * (1 - q) / n);
        CHECK(std::abs(below / static_cast<double>(n) - q) <= 3.0 * se);
      }
  }

  TEST_CASE("residual quantile of a simulated panel") {
    const double q = 0.25;
    GeneratorSpec gen = intercept_generator(Variant::tv, tv_truth(), 2000, 6, 8, 1.0);
    gen.q = QuantileLevel(q);
    const auto [data, truth] = simulate(gen);
    int below = 0, total = 0;
    for (std::size_t i = 0; i < data.units.size(); ++i)
      for (Index t = 0; t < data.units[i].size(); ++t, ++total)
        below += data.units[i].y(t) < truth.location[i](t) ? 1 : 0;
    CHECK(std::abs(below / static_cast<double>(total) - q) <= 3.0 * std::sqrt(q * (1 - q) / total));
  }

  TEST_CASE("brute force reduces to the mixture sum when m = 1") {
    const MixtureParams p = intercept_params(VectorXd::Constant(1, 0.3), Eigen::Vector2d(-1, 1),
                                             Eigen::Vector2d(0.3, 0.7), VectorXd(), VectorXd::Ones(1),
                                             MatrixXd::Ones(1, 1), 0.8);
    const auto [data, truth] = simulate(intercept_generator(Variant::tc, p, 4, 3, 9, 0.8));
    const DesignSet ds = build_design(data, {{"x1"}, {"intercept"}, {}, false});
    double direct = 0.0;
    for (const auto& u : ds.units) {
      double mix = 0.0;
      for (Index g = 0; g < 2; ++g) {
        double lp = 0.0;
        for (Index t = 0; t < u.size(); ++t)
          lp += ald_logdensity(u.y(t), u.X(t, 0) * 0.3 + p.betarTC(g, 0), 0.8, QuantileLevel(0.5));
        mix += p.pg(g) * std::exp(lp);
      }
      direct += std::log(mix);
    }
    CHECK(brute_force_loglik(p, ds, QuantileLevel(0.5)) == doctest::Approx(direct).epsilon(1e-12));
  }

  TEST_CASE("enumeration guard") {
    const auto [data, truth] = simulate(intercept_generator(Variant::tv, tv_truth(), 2, 25, 10, 1.0));
    const DesignSet ds = build_design(data, {{"x1"}, {}, {"intercept"}, false});
    CHECK_THROWS_AS(brute_force_loglik(tv_truth(), ds, QuantileLevel(0.5)), SizeError);
    CHECK_THROWS_AS(brute_force_posteriors(tv_truth(), ds, QuantileLevel(0.5)), SizeError);
  }

  TEST_CASE("invalid generator") {
    GeneratorSpec gen = intercept_generator(Variant::tc, tv_truth(), 10, 3, 1, 1.0);
    CHECK_THROWS_AS(simulate(gen), SpecificationError);
    gen = intercept_generator(Variant::tv, tv_truth(), 10, 3, 1, -1.0);
    CHECK_THROWS_AS(simulate(gen), SpecificationError);
  }
}

TEST_SUITE("stats") {
  TEST_CASE("normal quantiles") {
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(normal_cdf(normal_quantile(0.01)) == doctest::Approx(0.01).epsilon(1e-13));
    CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-12));
  }

  TEST_CASE("chi-square quantiles") {
    // Closed forms: df = 2 is exponential with mean 2.
    CHECK(chi_square_quantile(0.5, 2.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(chi_square_cdf(3.0, 2.0) == doctest::Approx(1.0 - std::exp(-1.5)).epsilon(1e-14));
    // df = 1 is a squared standard normal.
    CHECK(chi_square_quantile(0.95, 1.0) == doctest::Approx(std::pow(1.959963984540054, 2)).epsilon(1e-11));
    // Upper-tail branch.
    CHECK(1.0 - chi_square_cdf(30.0, 2.0) == doctest::Approx(std::exp(-15.0)).epsilon(1e-8));
  }
}
