#include <lqmix/simulate.hpp>

#include <lqmix/ald.hpp>
#include <lqmix/stats.hpp>

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace lqmix {

namespace {

using Real = long double;
using MatrixXr = Matrix<Real>;
using VectorXr = Vector<Real>;

Index draw_categorical(const VectorXd& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Index k = 0; k < p.size(); ++k) {
    acc += p(k);
    if (u < acc) return k;
  }
  return p.size() - 1;
}

Real log_sum_exp(const std::vector<Real>& terms) {
  Real top = -std::numeric_limits<Real>::infinity();
  for (const Real t : terms) top = std::max(top, t);
  if (!std::isfinite(top)) return top;
  Real sum = 0;
  for (const Real t : terms) sum += std::exp(t - top);
  return top + std::log(sum);
}

std::vector<MatrixXr> gamma_powers(const MatrixXd& Gamma, int up_to) {
  std::vector<MatrixXr> out(static_cast<std::size_t>(std::max(up_to, 1) + 1));
  const MatrixXr step = Gamma.cast<Real>();
  out[0] = MatrixXr::Identity(Gamma.rows(), Gamma.cols());
  for (std::size_t k = 1; k < out.size(); ++k) out[k] = out[k - 1] * step;
  return out;
}

Real log_emission(const MixtureParams& params, const UnitDesign& unit, Index row, Index g, Index h,
                  QuantileLevel q) {
  double mu = 0.0;
  if (params.p() > 0) mu += unit.X.row(row).dot(params.betaf);
  if (params.r() > 0) mu += unit.Z.row(row).dot(params.betarTC.row(g));
  if (params.l() > 0) mu += unit.W.row(row).dot(params.betarTV.row(h));
  return ald_logdensity<Real>(unit.y(row), mu, params.scale, q.value());
}

/// Advances a base-m odometer; false once it wraps around.
bool advance(std::vector<Index>& digits, Index m) {
  for (auto& d : digits) {
    if (++d < m) return true;
    d = 0;
  }
  return false;
}

void guard(Index G, Index m, std::size_t length) {
  const double terms = static_cast<double>(G) * std::pow(static_cast<double>(m), static_cast<double>(length));
  if (terms > kEnumerationLimit)
    throw SizeError(fmt::format("enumeration needs {:g} terms (limit {:g})", terms, kEnumerationLimit));
}

}  // namespace

void GeneratorSpec::validate() const {
  if (n < 1 || T < 1) throw SpecificationError("generator needs n >= 1 and T >= 1");
  true_params.validate();
  const Index G = true_params.G(), m = true_params.m();
  switch (variant) {
    case Variant::homogeneous:
      if (G != 1 || m != 1) throw SpecificationError("homogeneous generator needs G = m = 1");
      break;
    case Variant::tc:
      if (m != 1) throw SpecificationError("TC generator needs m = 1");
      break;
    case Variant::tv:
      if (G != 1) throw SpecificationError("TV generator needs G = 1");
      break;
    case Variant::tctv:
      break;
  }
  if (!(error_scale >= 0.0)) throw SpecificationError("error scale must be nonnegative");
  if (!(dropout_hazard >= 0.0 && dropout_hazard < 1.0))
    throw SpecificationError("dropout hazard must lie in [0, 1)");
  if (!(gap_probability >= 0.0 && gap_probability < 1.0))
    throw SpecificationError("gap probability must lie in [0, 1)");
  if (error_law == ErrorLaw::chi_square && !(chi_square_df > 0.0))
    throw SpecificationError("chi-square degrees of freedom must be positive");
}

double draw_error(ErrorLaw law, double scale, double q, double chi_square_df, Rng& rng) {
  if (scale == 0.0) return 0.0;
  switch (law) {
    case ErrorLaw::ald: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      std::exponential_distribution<double> expo(1.0);
      const bool negative = unif(rng) < q;
      const double e = expo(rng);
      return negative ? -scale * e / (1.0 - q) : scale * e / q;
    }
    case ErrorLaw::gaussian: {
      std::normal_distribution<double> norm(0.0, 1.0);
      return scale * (norm(rng) - normal_quantile(q));
    }
    case ErrorLaw::chi_square: {
      std::chi_squared_distribution<double> chi(chi_square_df);
      return scale * (chi(rng) - chi_square_quantile(q, chi_square_df));
    }
  }
  return 0.0;
}

std::pair<PanelDataset, LatentTruth> simulate(const GeneratorSpec& genspec) {
  genspec.validate();
  const Index n = genspec.n, T = genspec.T;
  const auto& params = genspec.true_params;
  const Index k = static_cast<Index>(genspec.covariates.size());

  PanelDataset full;
  for (Index t = 1; t <= T; ++t) full.time_grid.push_back(static_cast<double>(t));
  for (const auto& c : genspec.covariates) full.covariate_names.push_back(c.name);

  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) streams.push_back(make_stream(genspec.seed, static_cast<std::uint64_t>(i)));

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    Rng& rng = streams[static_cast<std::size_t>(i)];
    UnitRecord unit;
    unit.unit_id = std::to_string(i + 1);
    unit.y = VectorXd::Zero(T);
    unit.covariates.resize(T, k);
    for (Index t = 0; t < T; ++t) unit.times.push_back(static_cast<int>(t));
    for (Index c = 0; c < k; ++c) {
      const auto law = genspec.covariates[static_cast<std::size_t>(c)].law;
      const double unit_draw = unif(rng) < 0.5 ? 0.0 : 1.0;
      for (Index t = 0; t < T; ++t) {
        switch (law) {
          case CovariateLaw::uniform: unit.covariates(t, c) = unif(rng); break;
          case CovariateLaw::normal: unit.covariates(t, c) = norm(rng); break;
          case CovariateLaw::binary_unit: unit.covariates(t, c) = unit_draw; break;
          case CovariateLaw::time: unit.covariates(t, c) = static_cast<double>(t + 1); break;
        }
      }
    }
    full.units.push_back(std::move(unit));
  }

  const DesignSet design = build_design(full, genspec.roles);
  if (design.p() != params.p() || design.r() != params.r() || design.l() != params.l())
    throw SpecificationError(fmt::format(
        "true parameters have (p, r, l) = ({}, {}, {}) but the roles give ({}, {}, {})", params.p(),
        params.r(), params.l(), design.p(), design.r(), design.l()));

  LatentTruth truth;
  PanelDataset observed;
  observed.time_grid = full.time_grid;
  observed.covariate_names = full.covariate_names;
  for (Index i = 0; i < n; ++i) {
    Rng& rng = streams[static_cast<std::size_t>(i)];
    const UnitDesign& ud = design.units[static_cast<std::size_t>(i)];
    const Index g = draw_categorical(params.pg, rng);
    std::vector<Index> path(static_cast<std::size_t>(T));
    path[0] = draw_categorical(params.delta, rng);
    for (Index t = 1; t < T; ++t)
      path[static_cast<std::size_t>(t)] =
          draw_categorical(params.Gamma.row(path[static_cast<std::size_t>(t - 1)]).transpose(), rng);

    VectorXd location = VectorXd::Zero(T);
    UnitRecord& unit = full.units[static_cast<std::size_t>(i)];
    for (Index t = 0; t < T; ++t) {
      const Index h = path[static_cast<std::size_t>(t)];
      double mu = 0.0;
      if (params.p() > 0) mu += ud.X.row(t).dot(params.betaf);
      if (params.r() > 0) mu += ud.Z.row(t).dot(params.betarTC.row(g));
      if (params.l() > 0) mu += ud.W.row(t).dot(params.betarTV.row(h));
      location(t) = mu;
      unit.y(t) = mu + draw_error(genspec.error_law, genspec.error_scale, genspec.q.value(),
                                  genspec.chi_square_df, rng);
    }

    std::vector<bool> keep(static_cast<std::size_t>(T), true);
    for (Index t = 1; t < T; ++t) {
      if (genspec.dropout_hazard > 0.0 && unif(rng) < genspec.dropout_hazard) {
        for (Index s = t; s < T; ++s) keep[static_cast<std::size_t>(s)] = false;
        break;
      }
    }
    if (genspec.gap_probability > 0.0) {
      for (Index t = 0; t < T; ++t)
        if (unif(rng) < genspec.gap_probability) keep[static_cast<std::size_t>(t)] = false;
      if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; })) keep[0] = true;
    }

    UnitRecord out;
    out.unit_id = unit.unit_id;
    std::vector<Index> rows;
    for (Index t = 0; t < T; ++t)
      if (keep[static_cast<std::size_t>(t)]) rows.push_back(t);
    out.y.resize(static_cast<Index>(rows.size()));
    out.covariates.resize(static_cast<Index>(rows.size()), k);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      out.times.push_back(static_cast<int>(rows[j]));
      out.y(static_cast<Index>(j)) = unit.y(rows[j]);
      out.covariates.row(static_cast<Index>(j)) = unit.covariates.row(rows[j]);
    }
    observed.units.push_back(std::move(out));

    truth.component.push_back(g);
    truth.states.push_back(std::move(path));
    truth.location.push_back(std::move(location));
  }
  observed.validate();
  return {std::move(observed), std::move(truth)};
}

double brute_force_loglik(const MixtureParams& params, const DesignSet& design, QuantileLevel q) {
  const Index G = params.G(), m = params.m();
  const auto powers = gamma_powers(params.Gamma, design.grid_size);
  Real total = 0;
  for (const auto& unit : design.units) {
    const auto K = static_cast<std::size_t>(unit.size());
    guard(G, m, K);
    std::vector<Real> terms;
    for (Index g = 0; g < G; ++g) {
      std::vector<Index> s(K, 0);
      do {
        Real lp = std::log(static_cast<Real>(params.pg(g))) + std::log(static_cast<Real>(params.delta(s[0])));
        for (std::size_t j = 0; j < K; ++j) {
          if (j > 0) {
            const int gap = unit.times[j] - unit.times[j - 1];
            lp += std::log(powers[static_cast<std::size_t>(gap)](s[j - 1], s[j]));
          }
          lp += log_emission(params, unit, static_cast<Index>(j), g, s[j], q);
        }
        terms.push_back(lp);
      } while (advance(s, m));
    }
    total += log_sum_exp(terms);
  }
  return static_cast<double>(total);
}

Posteriors brute_force_posteriors(const MixtureParams& params, const DesignSet& design,
                                  QuantileLevel q) {
  const Index G = params.G(), m = params.m();
  Posteriors post;
  for (const auto& unit : design.units) {
    const int span = unit.span();
    guard(G, m, static_cast<std::size_t>(span));
    std::vector<int> row_at(static_cast<std::size_t>(span), -1);
    for (std::size_t j = 0; j < unit.times.size(); ++j)
      row_at[static_cast<std::size_t>(unit.times[j] - unit.times.front())] = static_cast<int>(j);

    struct Term {
      Index g;
      std::vector<Index> path;
      Real lp;
    };
    std::vector<Term> terms;
    std::vector<Real> lps;
    for (Index g = 0; g < G; ++g) {
      std::vector<Index> s(static_cast<std::size_t>(span), 0);
      do {
        Real lp = std::log(static_cast<Real>(params.pg(g))) + std::log(static_cast<Real>(params.delta(s[0])));
        for (int t = 0; t < span; ++t) {
          if (t > 0) lp += std::log(static_cast<Real>(params.Gamma(s[t - 1], s[t])));
          const int row = row_at[static_cast<std::size_t>(t)];
          if (row >= 0) lp += log_emission(params, unit, row, g, s[static_cast<std::size_t>(t)], q);
        }
        terms.push_back({g, s, lp});
        lps.push_back(lp);
      } while (advance(s, m));
    }
    const Real total = log_sum_exp(lps);

    UnitPosterior up;
    up.loglik = static_cast<double>(total);
    VectorXr u = VectorXr::Zero(G);
    MatrixXr v = MatrixXr::Zero(span, G * m);
    std::vector<MatrixXr> vv(static_cast<std::size_t>(std::max(span - 1, 0)), MatrixXr::Zero(G * m, m));
    for (const auto& term : terms) {
      const Real w = std::exp(term.lp - total);
      u(term.g) += w;
      for (int t = 0; t < span; ++t) {
        v(t, term.g * m + term.path[static_cast<std::size_t>(t)]) += w;
        if (t + 1 < span)
          vv[static_cast<std::size_t>(t)](term.g * m + term.path[static_cast<std::size_t>(t)],
                                         term.path[static_cast<std::size_t>(t + 1)]) += w;
      }
    }
    up.u = u.cast<double>();
    up.v = v.cast<double>();
    for (const auto& x : vv) up.vv.push_back(x.cast<double>());
    for (const int t : unit.times) up.obs.push_back(t - unit.times.front());
    post.units.push_back(std::move(up));
  }
  return post;
}

}  // namespace lqmix
