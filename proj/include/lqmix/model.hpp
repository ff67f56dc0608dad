#pragma once

#include <lqmix/panel.hpp>
#include <lqmix/types.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lqmix {

enum class Variant { homogeneous, tc, tv, tctv };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Which model a (G, m) cell denotes when TC and/or TV formulas are available.
Variant variant_for(Index G, Index m);

enum class StartRule { deterministic = 0, random = 1, supplied = 2 };

struct ModelSpec {
  Variant variant = Variant::homogeneous;
  QuantileLevel q{0.5};
  Index G = 1;
  Index m = 1;
  double eps = 1e-5;
  int maxit = 1000;
  StartRule start = StartRule::deterministic;
  std::optional<std::uint64_t> seed;
  /// BIC penalty uses log(N) observations instead of log(n) units.
  bool bic_uses_observations = false;

  void validate() const;
};

/// All free parameters of a TC / TV / TCTV linear quantile mixture.
struct MixtureParams {
  VectorXd betaf;    // p fixed coefficients
  MatrixXd betarTC;  // G x r component locations
  MatrixXd betarTV;  // m x l state locations
  VectorXd pg;       // G mixture probabilities
  VectorXd delta;    // m initial probabilities
  MatrixXd Gamma;    // m x m transition probabilities, row-stochastic
  double scale = 1.0;

  Index G() const { return pg.size(); }
  Index m() const { return delta.size(); }
  Index p() const { return betaf.size(); }
  Index r() const { return betarTC.cols(); }
  Index l() const { return betarTV.cols(); }

  /// Throws ValidationError on shape or probability-invariant violations.
  void validate(double tol = 1e-8) const;

  /// betaf, betarTC (row by row), betarTV (row by row), pg, delta, Gamma
  /// (row by row), scale.
  VectorXd flatten() const;
  /// Inverse of flatten; `shape` supplies the block dimensions.
  static MixtureParams unflatten(const MixtureParams& shape, const VectorXd& flat);
};

/// Posterior quantities for one unit. State-level arrays run over the unit's
/// span on the time grid (first to last observed occasion), so unobserved
/// occasions inside the span are represented; `obs` maps observed rows to span
/// positions.
struct UnitPosterior {
  VectorXd u;                   // G
  MatrixXd v;                   // span x (G*m), column g*m + h
  std::vector<MatrixXd> vv;     // span-1 matrices (G*m) x m: row g*m + h, column k
  std::vector<int> obs;
  double loglik = 0.0;
};

struct Posteriors {
  std::vector<UnitPosterior> units;

  MatrixXd u() const;
  VectorXd unit_loglik() const;
  /// Sum of unit contributions in unit order.
  double loglik() const;
};

struct TraceRow {
  int iteration = 0;
  double loglik = 0.0;
  std::optional<double> change;
};

struct FitResult {
  Variant variant = Variant::homogeneous;
  double q = 0.5;
  Index G = 1;
  Index m = 1;
  double eps = 1e-5;
  MixtureParams params;
  double loglik = 0.0;
  Index npar = 0;
  double aic = 0.0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  Posteriors posteriors;
  std::optional<MixtureParams> se;
  int se_failures = 0;
  double sigma_e = 0.0;
  MissingPattern miss = MissingPattern::none;
  Index n = 0;
  Index N = 0;
  std::vector<std::string> fixed_names, tc_names, tv_names;
  std::vector<TraceRow> trace;
  /// Components or states whose posterior mass fell under the floor.
  std::vector<std::string> diagnostics;
};

Index count_parameters(Index p, Index r, Index l, Index G, Index m);

}  // namespace lqmix
