#include <lqmix/em.hpp>

#include <lqmix/ald.hpp>
#include <lqmix/random.hpp>
#include <lqmix/wqr.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace lqmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassFloor = 1e-8;

double log_sum_exp(const double* v, Index size) {
  double top = kNegInf;
  for (Index i = 0; i < size; ++i) top = std::max(top, v[i]);
  if (top == kNegInf) return kNegInf;
  double acc = 0.0;
  for (Index i = 0; i < size; ++i) acc += std::exp(v[i] - top);
  return top + std::log(acc);
}

double log_sum_exp(const VectorXd& v) { return log_sum_exp(v.data(), v.size()); }

MatrixXd log_of(const MatrixXd& m) {
  return m.unaryExpr([](double x) { return x > 0 ? std::log(x) : kNegInf; });
}

void check_shapes(const MixtureParams& params, const DesignSet& design) {
  if (params.p() != design.p() || params.r() != design.r() || params.l() != design.l())
    throw SpecificationError(fmt::format(
        "parameter shapes (p={}, r={}, l={}) do not match the design (p={}, r={}, l={})",
        params.p(), params.r(), params.l(), design.p(), design.r(), design.l()));
}

bool is_intercept_name(const std::string& name) { return name == "(Intercept)"; }

// Sample quantile by linear interpolation between order statistics.
double empirical_quantile(std::vector<double> sorted, double level) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

MatrixXd log_emissions(const MixtureParams& params, const UnitDesign& unit, Index g,
                       QuantileLevel q) {
  const Index m = params.m();
  const int span = unit.span();
  MatrixXd out = MatrixXd::Zero(span, m);
  const VectorXd base = unit.X * params.betaf +
                        (unit.Z.cols() > 0 ? VectorXd(unit.Z * params.betarTC.row(g).transpose())
                                           : VectorXd::Zero(unit.size()));
  const int first = unit.times.front();
  for (Index t = 0; t < unit.size(); ++t) {
    const int s = unit.times[static_cast<std::size_t>(t)] - first;
    for (Index h = 0; h < m; ++h) {
      double mu = base(t);
      if (unit.W.cols() > 0) mu += unit.W.row(t).dot(params.betarTV.row(h));
      const double lf = ald_logdensity(unit.y(t), mu, params.scale, q);
      if (!std::isfinite(lf))
        throw NumericalError(
            fmt::format("non-finite emission at row {} (grid time {})", t, unit.times[static_cast<std::size_t>(t)]));
      out(s, h) = lf;
    }
  }
  return out;
}

ForwardBackward forward_backward(const MixtureParams& params, const UnitDesign& unit, Index g,
                                 QuantileLevel q) {
  const Index m = params.m();
  ForwardBackward fb;
  fb.log_emission = log_emissions(params, unit, g, q);
  const Index span = fb.log_emission.rows();
  const MatrixXd log_gamma = log_of(params.Gamma);
  const VectorXd log_delta = log_of(params.delta);

  fb.log_alpha.resize(span, m);
  fb.log_alpha.row(0) = (log_delta + fb.log_emission.row(0).transpose()).transpose();
  VectorXd buf(m);
  for (Index s = 1; s < span; ++s) {
    for (Index k = 0; k < m; ++k) {
      for (Index h = 0; h < m; ++h) buf(h) = fb.log_alpha(s - 1, h) + log_gamma(h, k);
      fb.log_alpha(s, k) = log_sum_exp(buf) + fb.log_emission(s, k);
    }
  }
  fb.loglik = log_sum_exp(VectorXd(fb.log_alpha.row(span - 1).transpose()));

  fb.log_beta.resize(span, m);
  fb.log_beta.row(span - 1).setZero();
  for (Index s = span - 2; s >= 0; --s) {
    for (Index h = 0; h < m; ++h) {
      for (Index k = 0; k < m; ++k)
        buf(k) = log_gamma(h, k) + fb.log_emission(s + 1, k) + fb.log_beta(s + 1, k);
      fb.log_beta(s, h) = log_sum_exp(buf);
    }
  }
  return fb;
}

MatrixXd ForwardBackward::state_posterior() const {
  MatrixXd out = (log_alpha + log_beta).array() - loglik;
  out = out.array().exp();
  // Renormalize rows against rounding.
  for (Index s = 0; s < out.rows(); ++s) out.row(s) /= out.row(s).sum();
  return out;
}

std::vector<MatrixXd> ForwardBackward::transition_posterior(const MatrixXd& Gamma) const {
  const Index m = log_alpha.cols();
  const MatrixXd log_gamma = log_of(Gamma);
  std::vector<MatrixXd> out;
  for (Index s = 0; s + 1 < log_alpha.rows(); ++s) {
    MatrixXd xi(m, m);
    for (Index h = 0; h < m; ++h)
      for (Index k = 0; k < m; ++k) {
        const double lv = log_alpha(s, h) + log_gamma(h, k) + log_emission(s + 1, k) +
                          log_beta(s + 1, k) - loglik;
        xi(h, k) = lv == kNegInf ? 0.0 : std::exp(lv);
      }
    xi /= xi.sum();
    out.push_back(std::move(xi));
  }
  return out;
}

Posteriors e_step(const MixtureParams& params, const DesignSet& design, const ModelSpec& spec) {
  check_shapes(params, design);
  const Index G = params.G();
  const Index m = params.m();
  const VectorXd log_pg = log_of(params.pg);

  Posteriors post;
  post.units.resize(design.units.size());
  std::vector<ForwardBackward> fbs(static_cast<std::size_t>(G));
  VectorXd comp(G);
  for (std::size_t i = 0; i < design.units.size(); ++i) {
    const UnitDesign& unit = design.units[i];
    UnitPosterior& up = post.units[i];
    for (Index g = 0; g < G; ++g) {
      try {
        fbs[static_cast<std::size_t>(g)] = forward_backward(params, unit, g, spec.q);
      } catch (const NumericalError& e) {
        throw NumericalError(fmt::format("unit {}: {}", i, e.what()));
      }
      comp(g) = log_pg(g) + fbs[static_cast<std::size_t>(g)].loglik;
    }
    up.loglik = log_sum_exp(comp);
    if (!std::isfinite(up.loglik))
      throw NumericalError(fmt::format("unit {}: log-likelihood is not finite", i));
    up.u = (comp.array() - up.loglik).exp();
    up.u /= up.u.sum();

    const int span = unit.span();
    up.v = MatrixXd::Zero(span, G * m);
    up.vv.assign(static_cast<std::size_t>(std::max(span - 1, 0)), MatrixXd::Zero(G * m, m));
    for (Index g = 0; g < G; ++g) {
      if (up.u(g) == 0.0) continue;
      const auto& fb = fbs[static_cast<std::size_t>(g)];
      up.v.middleCols(g * m, m) = up.u(g) * fb.state_posterior();
      const auto xi = fb.transition_posterior(params.Gamma);
      for (std::size_t s = 0; s < xi.size(); ++s) up.vv[s].middleRows(g * m, m) = up.u(g) * xi[s];
    }
    up.obs.clear();
    for (const int t : unit.times) up.obs.push_back(t - unit.times.front());
  }
  return post;
}

double loglik(const MixtureParams& params, const DesignSet& design, const ModelSpec& spec) {
  check_shapes(params, design);
  const VectorXd log_pg = log_of(params.pg);
  VectorXd comp(params.G());
  double total = 0.0;
  for (const auto& unit : design.units) {
    for (Index g = 0; g < params.G(); ++g)
      comp(g) = log_pg(g) + forward_backward(params, unit, g, spec.q).loglik;
    total += log_sum_exp(comp);
  }
  return total;
}

MixtureParams m_step(const Posteriors& post, const DesignSet& design, const ModelSpec& spec,
                     const MixtureParams& previous, MStepReport* report) {
  const Index G = previous.G();
  const Index m = previous.m();
  const Index p = design.p(), r = design.r(), l = design.l();
  const auto n = static_cast<double>(design.n());
  MixtureParams next = previous;

  // Latent layer.
  VectorXd comp_mass = VectorXd::Zero(G);
  VectorXd init_mass = VectorXd::Zero(m);
  MatrixXd trans = MatrixXd::Zero(m, m);
  VectorXd state_mass = VectorXd::Zero(m);
  for (const auto& up : post.units) {
    comp_mass += up.u;
    for (Index g = 0; g < G; ++g) init_mass += up.v.block(0, g * m, 1, m).transpose();
    for (const auto& vv : up.vv)
      for (Index g = 0; g < G; ++g) trans += vv.middleRows(g * m, m);
    for (const int s : up.obs)
      for (Index g = 0; g < G; ++g) state_mass += up.v.block(s, g * m, 1, m).transpose();
  }
  next.pg = comp_mass / n;
  next.pg /= next.pg.sum();
  next.delta = init_mass / n;
  next.delta /= next.delta.sum();
  for (Index h = 0; h < m; ++h) {
    const double denom = trans.row(h).sum();
    if (denom >= kMassFloor) {
      next.Gamma.row(h) = trans.row(h) / denom;
    } else if (m > 1 && report) {
      report->degenerate.push_back(fmt::format("transitions from state {}", h + 1));
    }
  }

  // Coefficient block: one weighted LP over rows replicated per (g, h).
  std::vector<bool> comp_active(static_cast<std::size_t>(G), true);
  std::vector<bool> state_active(static_cast<std::size_t>(m), true);
  if (G > 1)
    for (Index g = 0; g < G; ++g)
      if (comp_mass(g) < kMassFloor) {
        comp_active[static_cast<std::size_t>(g)] = false;
        if (report) report->degenerate.push_back(fmt::format("component {}", g + 1));
      }
  if (m > 1)
    for (Index h = 0; h < m; ++h)
      if (state_mass(h) < kMassFloor) {
        state_active[static_cast<std::size_t>(h)] = false;
        if (report) report->degenerate.push_back(fmt::format("state {}", h + 1));
      }

  // Column map: fixed, then r columns per active component, then l per active state.
  const Index K = p + G * r + m * l;
  std::vector<Index> active_cols;
  for (Index c = 0; c < p; ++c) active_cols.push_back(c);
  for (Index g = 0; g < G; ++g)
    if (comp_active[static_cast<std::size_t>(g)])
      for (Index c = 0; c < r; ++c) active_cols.push_back(p + g * r + c);
  for (Index h = 0; h < m; ++h)
    if (state_active[static_cast<std::size_t>(h)])
      for (Index c = 0; c < l; ++c) active_cols.push_back(p + G * r + h * l + c);
  std::vector<Index> slot(static_cast<std::size_t>(K), -1);
  for (std::size_t a = 0; a < active_cols.size(); ++a) slot[static_cast<std::size_t>(active_cols[a])] = static_cast<Index>(a);

  VectorXd full_prev(K);
  full_prev.head(p) = previous.betaf;
  for (Index g = 0; g < G; ++g) full_prev.segment(p + g * r, r) = previous.betarTC.row(g).transpose();
  for (Index h = 0; h < m; ++h) full_prev.segment(p + G * r + h * l, l) = previous.betarTV.row(h).transpose();

  const Index N = design.N();
  const Index rows = N * G * m;
  const auto A = static_cast<Index>(active_cols.size());
  WqrProblem lp;
  lp.q = spec.q;
  lp.design = MatrixXd::Zero(rows, A);
  lp.response.resize(rows);
  lp.weights.resize(rows);
  Index row = 0;
  for (std::size_t i = 0; i < design.units.size(); ++i) {
    const UnitDesign& unit = design.units[i];
    const UnitPosterior& up = post.units[i];
    for (Index t = 0; t < unit.size(); ++t) {
      const int s = up.obs[static_cast<std::size_t>(t)];
      for (Index g = 0; g < G; ++g) {
        for (Index h = 0; h < m; ++h, ++row) {
          double offset = 0.0;
          auto put = [&](Index col, double value) {
            const Index a = slot[static_cast<std::size_t>(col)];
            if (a >= 0)
              lp.design(row, a) = value;
            else
              offset += value * full_prev(col);
          };
          for (Index c = 0; c < p; ++c) put(c, unit.X(t, c));
          for (Index c = 0; c < r; ++c) put(p + g * r + c, unit.Z(t, c));
          for (Index c = 0; c < l; ++c) put(p + G * r + h * l + c, unit.W(t, c));
          lp.response(row) = unit.y(t) - offset;
          lp.weights(row) = up.v(s, g * m + h);
        }
      }
    }
  }

  WqrOptions opts;
  VectorXd warm(A);
  for (Index a = 0; a < A; ++a) warm(a) = full_prev(active_cols[static_cast<std::size_t>(a)]);
  opts.start = warm;
  const VectorXd coef = solve_wqr(lp, opts);

  VectorXd full = full_prev;
  for (Index a = 0; a < A; ++a) full(active_cols[static_cast<std::size_t>(a)]) = coef(a);
  next.betaf = full.head(p);
  for (Index g = 0; g < G; ++g) next.betarTC.row(g) = full.segment(p + g * r, r).transpose();
  for (Index h = 0; h < m; ++h) next.betarTV.row(h) = full.segment(p + G * r + h * l, l).transpose();

  const VectorXd resid = lp.response - lp.design * coef;
  double loss = 0.0;
  for (Index j = 0; j < rows; ++j)
    if (lp.weights(j) > 0) loss += lp.weights(j) * check_loss(resid(j), spec.q);
  next.scale = std::max(loss / static_cast<double>(N), kScaleFloor);
  return next;
}

MixtureParams init_params(const ModelSpec& spec, const DesignSet& design,
                          const MixtureParams* supplied) {
  spec.validate();
  const Index G = spec.G, m = spec.m;
  const Index p = design.p(), r = design.r(), l = design.l();
  if (G > 1 && r == 0) throw SpecificationError("G > 1 requires at least one TC random variable");
  if (m > 1 && l == 0) throw SpecificationError("m > 1 requires at least one TV random variable");

  if (spec.start == StartRule::supplied) {
    if (!supplied) throw ValidationError("start = supplied requires initial parameters");
    supplied->validate();
    if (supplied->G() != G || supplied->m() != m) throw ValidationError("supplied parameters do not match G and m");
    check_shapes(*supplied, design);
    return *supplied;
  }

  MatrixXd Xall;
  VectorXd yall;
  stack_design(design, Xall, yall);
  const HomogeneousFit base = fit_lqr(design, spec.q);
  const VectorXd residual = yall - Xall * base.coefficients;
  const std::vector<double> res(residual.data(), residual.data() + residual.size());

  MixtureParams params;
  params.betaf = base.coefficients.head(p);
  params.betarTC.resize(G, r);
  params.betarTV.resize(m, l);
  params.scale = base.scale;

  // Column-wise mean |value| used to convert a residual offset into a slope.
  auto mean_abs = [&](Index first_col, Index cols) {
    VectorXd out = Xall.middleCols(first_col, cols).cwiseAbs().colwise().mean().transpose();
    return out;
  };

  auto spread = [&](MatrixXd& locs, Index count, Index first_col, Index cols,
                    const std::vector<std::string>& names) {
    const VectorXd base_coef = base.coefficients.segment(first_col, cols);
    const bool has_intercept =
        std::any_of(names.begin(), names.end(), is_intercept_name);
    const VectorXd scale_cols = mean_abs(first_col, cols);
    for (Index g = 0; g < count; ++g) {
      locs.row(g) = base_coef.transpose();
      if (count == 1) continue;
      const double offset = empirical_quantile(res, (static_cast<double>(g) + 0.5) / static_cast<double>(count));
      for (Index c = 0; c < cols; ++c) {
        if (is_intercept_name(names[static_cast<std::size_t>(c)]))
          locs(g, c) += offset;
        else if (!has_intercept && scale_cols(c) > 0)
          locs(g, c) += offset / scale_cols(c);
      }
    }
  };
  spread(params.betarTC, G, p, r, design.tc_names);
  spread(params.betarTV, m, p + r, l, design.tv_names);

  params.pg = VectorXd::Constant(G, 1.0 / static_cast<double>(G));
  params.delta = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  if (m == 1) {
    params.Gamma = MatrixXd::Ones(1, 1);
  } else {
    params.Gamma = MatrixXd::Constant(m, m, 0.2 / static_cast<double>(m - 1));
    params.Gamma.diagonal().setConstant(0.8);
  }

  if (spec.start == StartRule::random) {
    Rng rng(spec.seed ? *spec.seed : std::random_device{}());
    double mean = 0.0;
    for (const double v : res) mean += v;
    mean /= static_cast<double>(res.size());
    double var = 0.0;
    for (const double v : res) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(std::max<std::size_t>(res.size() - 1, 1)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto jitter = [&](MatrixXd& locs, Index count, Index first_col, Index cols) {
      if (count == 1) return;
      const VectorXd scale_cols = mean_abs(first_col, cols);
      for (Index g = 0; g < count; ++g)
        for (Index c = 0; c < cols; ++c)
          locs(g, c) += normal(rng) * sd / std::max(scale_cols(c), 1e-12);
    };
    auto flat_simplex = [&](Index size) {
      VectorXd w(size);
      for (Index k = 0; k < size; ++k) w(k) = -std::log(1.0 - unif(rng));
      return VectorXd(w / w.sum());
    };
    jitter(params.betarTC, G, p, r);
    jitter(params.betarTV, m, p + r, l);
    if (G > 1) params.pg = flat_simplex(G);
    if (m > 1) {
      params.delta = flat_simplex(m);
      for (Index h = 0; h < m; ++h) params.Gamma.row(h) = flat_simplex(m).transpose();
    }
  }
  return params;
}

void canonicalize(MixtureParams& params, Posteriors* post) {
  const Index G = params.G(), m = params.m();
  auto order_of = [](const MatrixXd& locs, Index count) {
    std::vector<Index> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), Index{0});
    if (locs.cols() > 0)
      std::stable_sort(order.begin(), order.end(),
                       [&](Index a, Index b) { return locs(a, 0) < locs(b, 0); });
    return order;
  };
  const auto cperm = order_of(params.betarTC, G);
  const auto sperm = order_of(params.betarTV, m);

  MixtureParams out = params;
  for (Index g = 0; g < G; ++g) {
    out.betarTC.row(g) = params.betarTC.row(cperm[static_cast<std::size_t>(g)]);
    out.pg(g) = params.pg(cperm[static_cast<std::size_t>(g)]);
  }
  for (Index h = 0; h < m; ++h) {
    const Index from = sperm[static_cast<std::size_t>(h)];
    out.betarTV.row(h) = params.betarTV.row(from);
    out.delta(h) = params.delta(from);
    for (Index k = 0; k < m; ++k) out.Gamma(h, k) = params.Gamma(from, sperm[static_cast<std::size_t>(k)]);
  }
  params = std::move(out);

  if (!post) return;
  for (auto& up : post->units) {
    VectorXd u(G);
    MatrixXd v(up.v.rows(), G * m);
    for (Index g = 0; g < G; ++g) {
      const Index gf = cperm[static_cast<std::size_t>(g)];
      u(g) = up.u(gf);
      for (Index h = 0; h < m; ++h) v.col(g * m + h) = up.v.col(gf * m + sperm[static_cast<std::size_t>(h)]);
    }
    for (auto& vv : up.vv) {
      MatrixXd nv(G * m, m);
      for (Index g = 0; g < G; ++g)
        for (Index h = 0; h < m; ++h)
          for (Index k = 0; k < m; ++k)
            nv(g * m + h, k) = vv(cperm[static_cast<std::size_t>(g)] * m + sperm[static_cast<std::size_t>(h)],
                                  sperm[static_cast<std::size_t>(k)]);
      vv = std::move(nv);
    }
    up.u = std::move(u);
    up.v = std::move(v);
  }
}

namespace {

std::vector<std::string> trace_columns(Variant variant) {
  switch (variant) {
    case Variant::homogeneous: return {"iteration", "lk"};
    case Variant::tc: return {"iteration", "G", "lk", "(lk-lko)"};
    case Variant::tv: return {"iteration", "m", "lk", "(lk-lko)"};
    case Variant::tctv: return {"iteration", "m", "G", "lk", "(lk-lko)"};
  }
  return {};
}

std::string trace_rule(std::size_t columns) {
  std::string out = "------------|";
  for (std::size_t c = 1; c < columns; ++c) out += "-------------|";
  return out;
}

std::string trace_cells(const std::vector<std::string>& cells) {
  std::string out = fmt::format("{:>11} |", cells.front());
  for (std::size_t c = 1; c < cells.size(); ++c) out += fmt::format(" {:>11} |", cells[c]);
  return out;
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void print_trace_header(std::ostream& os, Variant variant) {
  const auto cols = trace_columns(variant);
  os << trace_rule(cols.size()) << "\n";
  std::string header = fmt::format("{:>11} |", cols.front());
  for (std::size_t c = 1; c < cols.size(); ++c) header += fmt::format(" {:^11} |", cols[c]);
  os << header << "\n" << trace_rule(cols.size()) << "\n";
}

void print_trace_row(std::ostream& os, Variant variant, const TraceRow& row, Index G, Index m) {
  std::vector<std::string> cells{std::to_string(row.iteration)};
  if (variant == Variant::tv || variant == Variant::tctv) cells.push_back(std::to_string(m));
  if (variant == Variant::tc || variant == Variant::tctv) cells.push_back(std::to_string(G));
  cells.push_back(g6(row.loglik));
  if (variant != Variant::homogeneous) cells.push_back(row.change ? g6(*row.change) : "NA");
  os << trace_cells(cells) << " \n";
}

void print_trace_footer(std::ostream& os, Variant variant) {
  os << trace_rule(trace_columns(variant).size()) << "\n";
}

FitResult fit(const DesignSet& design, const ModelSpec& spec, const MixtureParams* supplied,
              const FitOptions& options) {
  spec.validate();
  FitResult result;
  result.variant = spec.variant;
  result.q = spec.q.value();
  result.G = spec.G;
  result.m = spec.m;
  result.eps = spec.eps;
  result.n = design.n();
  result.N = design.N();
  result.miss = classify_missingness(design);
  result.fixed_names = design.fixed_names;
  result.tc_names = design.tc_names;
  result.tv_names = design.tv_names;

  std::ostream* trace = options.trace;
  if (trace) {
    *trace << "Model " << to_string(spec.variant) << " - qtl = " << g6(spec.q.value()) << " \n";
    print_trace_header(*trace, spec.variant);
  }

  if (spec.variant == Variant::homogeneous) {
    const HomogeneousFit h = fit_lqr(design, spec.q);
    MixtureParams params;
    params.betaf = h.coefficients.head(design.p());
    params.betarTC = h.coefficients.segment(design.p(), design.r()).transpose();
    params.betarTV = h.coefficients.tail(design.l()).transpose();
    params.pg = VectorXd::Ones(1);
    params.delta = VectorXd::Ones(1);
    params.Gamma = MatrixXd::Ones(1, 1);
    params.scale = h.scale;
    result.params = params;
    result.posteriors = e_step(params, design, spec);
    result.loglik = h.loglik;
    result.iterations = 0;
    result.converged = true;
    result.trace.push_back({0, h.loglik, std::nullopt});
    if (trace) {
      print_trace_row(*trace, spec.variant, result.trace.back(), 1, 1);
      print_trace_footer(*trace, spec.variant);
    }
  } else {
    MixtureParams params = init_params(spec, design, supplied);
    canonicalize(params);
    Posteriors post = e_step(params, design, spec);
    double ll = post.loglik();
    result.trace.push_back({0, ll, std::nullopt});
    if (trace) print_trace_row(*trace, spec.variant, result.trace.back(), spec.G, spec.m);

    MStepReport report;
    int it = 0;
    bool converged = false;
    while (it < spec.maxit) {
      ++it;
      report.degenerate.clear();
      params = m_step(post, design, spec, params, &report);
      canonicalize(params);
      post = e_step(params, design, spec);
      const double next = post.loglik();
      const double change = next - ll;
      result.trace.push_back({it, next, change});
      converged = std::abs(change) / (std::abs(ll) + 1.0) < spec.eps;
      ll = next;
      if (trace && (it % 10 == 0 || converged || it == spec.maxit))
        print_trace_row(*trace, spec.variant, result.trace.back(), spec.G, spec.m);
      if (converged) break;
    }
    if (trace) print_trace_footer(*trace, spec.variant);
    canonicalize(params, &post);
    result.params = std::move(params);
    result.posteriors = std::move(post);
    result.loglik = ll;
    result.iterations = it;
    result.converged = converged;
    result.diagnostics = report.degenerate;
  }

  result.npar = count_parameters(design.p(), design.r(), design.l(), spec.G, spec.m);
  result.aic = -2.0 * result.loglik + 2.0 * static_cast<double>(result.npar);
  const double penalty_n = spec.bic_uses_observations ? static_cast<double>(result.N)
                                                      : static_cast<double>(result.n);
  result.bic = -2.0 * result.loglik + std::log(penalty_n) * static_cast<double>(result.npar);
  result.sigma_e = ald_sd(result.params.scale, spec.q);
  return result;
}

}  // namespace lqmix
