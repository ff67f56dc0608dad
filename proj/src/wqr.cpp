#include <lqmix/wqr.hpp>

#include <lqmix/ald.hpp>
#include <lqmix/bootstrap.hpp>
#include <lqmix/random.hpp>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lqmix {

namespace {

// Deterministic symbolic perturbation of the response; breaks ties between
// zero residuals so every vertex is treated as non-degenerate.
double perturbation(Index j) {
  return 0.5 + static_cast<double>(splitmix64(static_cast<std::uint64_t>(j)) >> 11) * 0x1.0p-53;
}

struct Breakpoint {
  double t;
  double tie;  // ordering among breakpoints at the same real step
  Index row;
  double slope_jump;
};

class VertexDescent {
 public:
  VertexDescent(const MatrixXd& X, const VectorXd& y, const VectorXd& w, double q)
      : X_(X), y_(y), w_(w), q_(q), N_(X.rows()), k_(X.cols()), in_basis_(N_, false) {
    pi_.resize(N_);
    for (Index j = 0; j < N_; ++j) pi_(j) = perturbation(j);
    const double yscale = y_.cwiseAbs().maxCoeff();
    rtol_ = 1e-11 * (1.0 + yscale);
    dtol_ = 1e-11 * std::max(1.0, w_.maxCoeff());
  }

  void initial_basis(const VectorXd& b0) {
    const VectorXd r = y_ - X_ * b0;
    std::vector<Index> order(static_cast<std::size_t>(N_));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(r(a)) < std::abs(r(b)); });
    MatrixXd Q(k_, k_);
    Index accepted = 0;
    basis_.clear();
    for (const Index j : order) {
      VectorXd v = X_.row(j).transpose();
      const double norm0 = v.norm();
      if (norm0 == 0.0) continue;
      for (int pass = 0; pass < 2; ++pass)
        for (Index c = 0; c < accepted; ++c) v -= Q.col(c).dot(v) * Q.col(c);
      const double norm = v.norm();
      if (norm > 1e-9 * norm0) {
        Q.col(accepted++) = v / norm;
        basis_.push_back(j);
        if (accepted == k_) break;
      }
    }
    if (accepted < k_) throw SingularDesignError("design is rank deficient on the weighted rows");
    for (const Index j : basis_) in_basis_[static_cast<std::size_t>(j)] = true;
  }

  int run(int max_pivots) {
    int pivots = 0;
    refresh();
    while (true) {
      if (pivots >= max_pivots) throw NumericalError("quantile regression LP did not terminate");
      Index best_i = -1;
      int best_s = 0;
      double best_d = -dtol_;
      for (Index i = 0; i < k_; ++i) {
        const double wi = w_(basis_[static_cast<std::size_t>(i)]);
        const double d_plus = wi * (1.0 - q_) - g_(i);
        const double d_minus = wi * q_ + g_(i);
        if (d_plus < best_d) { best_d = d_plus; best_i = i; best_s = +1; }
        if (d_minus < best_d) { best_d = d_minus; best_i = i; best_s = -1; }
      }
      if (best_i < 0) break;
      if (!step(best_i, best_s, best_d, 0.0, false)) break;
      ++pivots;
      refresh();
    }
    // Follow zero-cost edges that decrease the coefficients lexicographically.
    while (pivots < max_pivots) {
      bool moved = false;
      for (Index i = 0; i < k_ && !moved; ++i) {
        const double wi = w_(basis_[static_cast<std::size_t>(i)]);
        for (const int s : {+1, -1}) {
          const double d = s > 0 ? wi * (1.0 - q_) - g_(i) : wi * q_ + g_(i);
          if (d > dtol_) continue;
          if (!lex_negative(Binv_.col(i) * s)) continue;
          if (step(i, s, d, dtol_, true)) {
            ++pivots;
            refresh();
            moved = true;
            break;
          }
        }
      }
      if (!moved) break;
    }
    return pivots;
  }

  const VectorXd& coefficients() const { return b_; }

 private:
  void refresh() {
    MatrixXd XB(k_, k_);
    VectorXd yB(k_), piB(k_);
    for (Index i = 0; i < k_; ++i) {
      const Index j = basis_[static_cast<std::size_t>(i)];
      XB.row(i) = X_.row(j);
      yB(i) = y_(j);
      piB(i) = pi_(j);
    }
    const Eigen::PartialPivLU<MatrixXd> lu(XB);
    Binv_ = lu.inverse();
    b_ = Binv_ * yB;
    A_ = X_ * Binv_;
    r_ = y_ - X_ * b_;
    e_ = pi_ - A_ * piB;
    sign_.resize(N_);
    for (Index j = 0; j < N_; ++j) {
      if (in_basis_[static_cast<std::size_t>(j)]) {
        r_(j) = 0.0;
        sign_(j) = 0.0;
      } else if (std::abs(r_(j)) > rtol_) {
        sign_(j) = r_(j) > 0 ? 1.0 : -1.0;
      } else {
        r_(j) = 0.0;
        sign_(j) = e_(j) > 0 ? 1.0 : -1.0;
      }
    }
    VectorXd wpsi(N_);
    for (Index j = 0; j < N_; ++j)
      wpsi(j) = sign_(j) == 0.0 ? 0.0 : w_(j) * (sign_(j) > 0 ? q_ : q_ - 1.0);
    g_ = A_.transpose() * wpsi;
  }

  bool lex_negative(const VectorXd& d) const {
    const double scale = d.cwiseAbs().maxCoeff();
    for (Index c = 0; c < d.size(); ++c) {
      if (std::abs(d(c)) > 1e-10 * scale) return d(c) < 0;
    }
    return false;
  }

  // Exact line search along edge (i, s). In the lexicographic phase the walk
  // stops only where the slope turns strictly positive and must move.
  bool step(Index i, int s, double slope, double stop_above, bool require_move) {
    breaks_.clear();
    for (Index j = 0; j < N_; ++j) {
      if (in_basis_[static_cast<std::size_t>(j)]) continue;
      const double c = -s * A_(j, i);
      if (std::abs(c) <= 1e-12) continue;
      if ((c > 0) == (sign_(j) > 0)) continue;  // moving away from zero
      const double t = r_(j) == 0.0 ? 0.0 : -r_(j) / c;
      breaks_.push_back({std::max(t, 0.0), r_(j) == 0.0 ? -e_(j) / c : 0.0, j, w_(j) * std::abs(c)});
    }
    std::sort(breaks_.begin(), breaks_.end(), [](const Breakpoint& a, const Breakpoint& b) {
      if (a.t != b.t) return a.t < b.t;
      if (a.tie != b.tie) return a.tie < b.tie;
      return a.row < b.row;
    });
    for (const auto& bp : breaks_) {
      slope += bp.slope_jump;
      const bool stop = stop_above > 0.0 ? slope > stop_above : slope >= 0.0;
      if (!stop) continue;
      if (require_move && bp.t <= rtol_) return false;
      const Index leaving = basis_[static_cast<std::size_t>(i)];
      in_basis_[static_cast<std::size_t>(leaving)] = false;
      in_basis_[static_cast<std::size_t>(bp.row)] = true;
      basis_[static_cast<std::size_t>(i)] = bp.row;
      return true;
    }
    if (require_move) return false;
    throw NumericalError("quantile regression objective unbounded along an edge");
  }

  const MatrixXd& X_;
  const VectorXd& y_;
  const VectorXd& w_;
  double q_;
  Index N_, k_;
  std::vector<bool> in_basis_;
  std::vector<Index> basis_;
  VectorXd pi_, b_, r_, e_, g_, sign_;
  MatrixXd Binv_, A_;
  double rtol_ = 0, dtol_ = 0;
  std::vector<Breakpoint> breaks_;
};

}  // namespace

double wqr_objective(const WqrProblem& problem, const VectorXd& b) {
  const VectorXd r = problem.response - problem.design * b;
  double total = 0.0;
  for (Index j = 0; j < r.size(); ++j)
    total += problem.weights(j) * check_loss<double>(r(j), problem.q.value());
  return total;
}

WqrSolution solve_wqr_detailed(const WqrProblem& problem, const WqrOptions& options) {
  const Index N = problem.design.rows();
  const Index k = problem.design.cols();
  if (problem.response.size() != N || problem.weights.size() != N)
    throw SpecificationError("design, response and weights must have the same number of rows");
  if ((problem.weights.array() < 0).any() || !problem.weights.allFinite())
    throw SpecificationError("weights must be finite and nonnegative");
  if (!problem.design.allFinite() || !problem.response.allFinite())
    throw NumericalError("non-finite value in quantile regression problem");

  std::vector<Index> rows;
  for (Index j = 0; j < N; ++j)
    if (problem.weights(j) >= options.weight_floor) rows.push_back(j);
  if (rows.empty()) throw DegenerateProblemError("all weights are zero");

  WqrSolution solution;
  if (k == 0) {
    solution.coefficients = VectorXd(0);
    solution.objective = wqr_objective(problem, solution.coefficients);
    return solution;
  }

  const Index M = static_cast<Index>(rows.size());
  MatrixXd X(M, k);
  VectorXd y(M), w(M);
  for (Index m = 0; m < M; ++m) {
    X.row(m) = problem.design.row(rows[static_cast<std::size_t>(m)]);
    y(m) = problem.response(rows[static_cast<std::size_t>(m)]);
    w(m) = problem.weights(rows[static_cast<std::size_t>(m)]);
  }

  const Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  if (qr.rank() < k) {
    std::vector<Index> offending;
    for (Index c = qr.rank(); c < k; ++c) offending.push_back(qr.colsPermutation().indices()(c));
    std::sort(offending.begin(), offending.end());
    throw SingularDesignError(
        fmt::format("design is rank deficient on positive-weight rows; dependent column(s) {}",
                    offending));
  }

  VectorXd b0;
  if (options.start && options.start->size() == k) {
    b0 = *options.start;
  } else {
    const MatrixXd XtW = X.transpose() * w.asDiagonal();
    b0 = (XtW * X).ldlt().solve(XtW * y);
    if (!b0.allFinite()) b0 = VectorXd::Zero(k);
  }

  VertexDescent solver(X, y, w, problem.q.value());
  solver.initial_basis(b0);
  solution.pivots = solver.run(options.max_pivots);
  solution.coefficients = solver.coefficients();
  solution.objective = wqr_objective(problem, solution.coefficients);
  return solution;
}

void stack_design(const DesignSet& design, MatrixXd& X, VectorXd& y) {
  const Index N = design.N();
  const Index p = design.p(), r = design.r(), l = design.l();
  X.resize(N, p + r + l);
  y.resize(N);
  Index row = 0;
  for (const auto& u : design.units) {
    const Index T = u.size();
    X.block(row, 0, T, p) = u.X;
    X.block(row, p, T, r) = u.Z;
    X.block(row, p + r, T, l) = u.W;
    y.segment(row, T) = u.y;
    row += T;
  }
}

namespace {

HomogeneousFit lqr_point(const DesignSet& design, QuantileLevel q) {
  WqrProblem problem;
  stack_design(design, problem.design, problem.response);
  problem.weights = VectorXd::Ones(problem.response.size());
  problem.q = q;

  HomogeneousFit fit;
  fit.coefficients = solve_wqr(problem);
  const VectorXd residual = problem.response - problem.design * fit.coefficients;
  double loss = 0.0;
  for (Index j = 0; j < residual.size(); ++j) loss += check_loss(residual(j), q);
  fit.scale = std::max(loss / static_cast<double>(residual.size()), kScaleFloor);
  for (Index j = 0; j < residual.size(); ++j)
    fit.loglik += ald_logdensity(problem.response(j), problem.response(j) - residual(j), fit.scale, q);
  return fit;
}

}  // namespace

HomogeneousFit fit_lqr(const DesignSet& design, QuantileLevel q, const LqrOptions& options) {
  HomogeneousFit fit = lqr_point(design, q);
  if (!options.se) return fit;

  const Index n = design.n();
  std::vector<std::optional<VectorXd>> replicates(static_cast<std::size_t>(options.R));
  parallel_for(options.R, options.workers, [&](int b) {
    Rng rng = make_stream(options.seed, static_cast<std::uint64_t>(b));
    const auto idx = resample_indices(n, rng);
    DesignSet boot;
    boot.fixed_names = design.fixed_names;
    boot.tc_names = design.tc_names;
    boot.tv_names = design.tv_names;
    for (const auto i : idx) boot.units.push_back(design.units[static_cast<std::size_t>(i)]);
    try {
      replicates[static_cast<std::size_t>(b)] = lqr_point(boot, q).coefficients;
    } catch (const Error&) {
    }
  });
  std::vector<VectorXd> ok;
  for (auto& r : replicates)
    if (r) ok.push_back(std::move(*r));
  fit.failures = options.R - static_cast<int>(ok.size());
  if (ok.empty()) throw BootstrapFailure("every bootstrap replicate failed");
  fit.se = bootstrap_aggregate(fit.coefficients, ok);
  return fit;
}

}  // namespace lqmix
