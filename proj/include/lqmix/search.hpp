#pragma once

// Grid search over the number of mixture components G and hidden states m
// with multi-start EM and AIC / BIC / log-likelihood selection.

#include <lqmix/bootstrap.hpp>
#include <lqmix/model.hpp>
#include <lqmix/panel.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lqmix {

enum class Criterion { bic, aic, lk };

const char* to_string(Criterion c);
Criterion criterion_from_string(const std::string& s);

struct SearchPlan {
  std::optional<std::vector<Index>> Gv;
  std::optional<std::vector<Index>> mv;
  Criterion method = Criterion::bic;
  int nran = 0;
  QuantileLevel q{0.5};
  double eps = 1e-5;
  int maxit = 1000;
  bool se_for_best = false;
  int R = 50;
  std::uint64_t seed = 0;
  int workers = 1;
  bool bic_uses_observations = false;

  void validate() const;
};

/// Random starts for a cell on top of the always-present deterministic one.
int enumerate_starts(Variant variant, Index G, Index m, int nran);

struct CellResult {
  Variant variant = Variant::homogeneous;
  Index G = 1;
  Index m = 1;
  int starts = 1;          // total starts tried, deterministic included
  int best_start = 0;      // 0 = deterministic
  std::optional<FitResult> fit;
  bool failed = false;
  std::string failure;
};

struct SearchResult {
  std::vector<CellResult> cells;  // ordered by (G, m)
  std::size_t best = 0;
  Criterion method = Criterion::bic;
  std::optional<BootstrapResult> best_se;

  const FitResult& best_fit() const { return *cells[best].fit; }
  /// Criterion value of a cell under the search method (NaN for failed cells).
  double criterion(const CellResult& cell) const;
};

/// Start seed for a (G, m, start) cell under a master seed.
std::uint64_t start_seed(std::uint64_t seed, Index G, Index m, int start);

SearchResult search(const DesignSet& design, const SearchPlan& plan, std::ostream* trace = nullptr);

}  // namespace lqmix
