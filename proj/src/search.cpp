#include <lqmix/search.hpp>

#include <lqmix/em.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace lqmix {

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::bic: return "bic";
    case Criterion::aic: return "aic";
    case Criterion::lk: return "lk";
  }
  return "?";
}

Criterion criterion_from_string(const std::string& s) {
  if (s == "bic") return Criterion::bic;
  if (s == "aic") return Criterion::aic;
  if (s == "lk") return Criterion::lk;
  throw SpecificationError("unknown selection method '" + s + "' (expected bic, aic or lk)");
}

void SearchPlan::validate() const {
  if (!Gv && !mv) throw PlanError("at least one of Gv and mv is required");
  if ((Gv && Gv->empty()) || (mv && mv->empty())) throw PlanError("empty search grid");
  if (nran < 0) throw PlanError("nran must be nonnegative");
  for (const auto* grid : {&Gv, &mv})
    if (*grid)
      for (const Index v : **grid)
        if (v < 1) throw PlanError("grid values must be at least 1");
}

int enumerate_starts(Variant variant, Index G, Index m, int nran) {
  switch (variant) {
    case Variant::homogeneous: return 0;
    case Variant::tc: return nran * static_cast<int>(G - 1);
    case Variant::tv: return nran * static_cast<int>(m - 1);
    case Variant::tctv: return nran * static_cast<int>((G - 1) * (m - 1));
  }
  return 0;
}

std::uint64_t start_seed(std::uint64_t seed, Index G, Index m, int start) {
  const auto cell = static_cast<std::uint64_t>(G) * 0x100000001B3ull ^
                    static_cast<std::uint64_t>(m) * 0x9E3779B1ull ^
                    static_cast<std::uint64_t>(start) * 0xC2B2AE3D27D4EB4Full;
  return splitmix64(seed ^ splitmix64(cell));
}

double SearchResult::criterion(const CellResult& cell) const {
  if (cell.failed || !cell.fit) return std::numeric_limits<double>::quiet_NaN();
  switch (method) {
    case Criterion::bic: return cell.fit->bic;
    case Criterion::aic: return cell.fit->aic;
    case Criterion::lk: return cell.fit->loglik;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

SearchResult search(const DesignSet& design, const SearchPlan& plan, std::ostream* trace) {
  plan.validate();
  const std::vector<Index> Gs = plan.Gv ? *plan.Gv : std::vector<Index>{1};
  const std::vector<Index> ms = plan.mv ? *plan.mv : std::vector<Index>{1};

  SearchResult result;
  result.method = plan.method;
  for (const Index G : Gs)
    for (const Index m : ms) {
      CellResult cell;
      cell.G = G;
      cell.m = m;
      cell.variant = variant_for(G, m);
      cell.starts = 1 + enumerate_starts(cell.variant, G, m, plan.nran);
      result.cells.push_back(std::move(cell));
    }
  std::stable_sort(result.cells.begin(), result.cells.end(), [](const CellResult& a, const CellResult& b) {
    return a.G != b.G ? a.G < b.G : a.m < b.m;
  });
  // Duplicate grid entries collapse to one cell.
  result.cells.erase(std::unique(result.cells.begin(), result.cells.end(),
                                 [](const CellResult& a, const CellResult& b) {
                                   return a.G == b.G && a.m == b.m;
                                 }),
                     result.cells.end());

  struct Job {
    std::size_t cell;
    int start;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < result.cells.size(); ++c)
    for (int s = 0; s < result.cells[c].starts; ++s) jobs.push_back({c, s});

  std::vector<std::optional<FitResult>> fits(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), plan.workers, [&](int j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    const CellResult& cell = result.cells[job.cell];
    ModelSpec spec;
    spec.variant = cell.variant;
    spec.q = plan.q;
    spec.G = cell.G;
    spec.m = cell.m;
    spec.eps = plan.eps;
    spec.maxit = plan.maxit;
    spec.bic_uses_observations = plan.bic_uses_observations;
    spec.start = job.start == 0 ? StartRule::deterministic : StartRule::random;
    spec.seed = start_seed(plan.seed, cell.G, cell.m, job.start);
    try {
      fits[static_cast<std::size_t>(j)] = fit(design, spec);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(j)] = e.what();
    }
  });

  // Keep the highest-likelihood start per cell; converged starts take priority.
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    CellResult& cell = result.cells[jobs[j].cell];
    auto& candidate = fits[j];
    if (!candidate) {
      if (cell.failure.empty()) cell.failure = errors[j];
      continue;
    }
    const bool better =
        !cell.fit || (candidate->converged && !cell.fit->converged) ||
        (candidate->converged == cell.fit->converged && candidate->loglik > cell.fit->loglik);
    if (better) {
      cell.fit = std::move(candidate);
      cell.best_start = jobs[j].start;
    }
  }
  bool any = false;
  for (auto& cell : result.cells) {
    if (!cell.fit) {
      cell.failed = true;
      continue;
    }
    if (!cell.fit->converged) {
      cell.failed = true;
      cell.failure = "EM reached maxit without converging";
      continue;
    }
    const double value = result.criterion(cell);
    if (!any) {
      result.best = static_cast<std::size_t>(&cell - result.cells.data());
      any = true;
      continue;
    }
    const double incumbent = result.criterion(result.cells[result.best]);
    const bool wins = plan.method == Criterion::lk ? value > incumbent : value < incumbent;
    if (wins) result.best = static_cast<std::size_t>(&cell - result.cells.data());
  }
  if (!any) throw SearchFailure("every cell of the search grid failed");

  if (trace) {
    *trace << "Search the optimal linear quantile mixture model \n"
           << "************************************************* \n";
    for (const auto& cell : result.cells) {
      *trace << "Model " << to_string(cell.variant) << " - qtl = " << plan.q.value() << " \n";
      *trace << "Random start: ";
      for (int s = 0; s < cell.starts; ++s) *trace << s << (s == 0 ? " ... " : "  ... ");
      *trace << "\n";
      if (!cell.fit) {
        *trace << "  failed: " << cell.failure << "\n";
        continue;
      }
      const FitResult& f = *cell.fit;
      print_trace_header(*trace, cell.variant);
      for (std::size_t k = 0; k < f.trace.size(); ++k) {
        const auto& row = f.trace[k];
        if (row.iteration == 0 || row.iteration % 10 == 0 || k + 1 == f.trace.size())
          print_trace_row(*trace, cell.variant, row, cell.G, cell.m);
      }
      print_trace_footer(*trace, cell.variant);
      if (cell.failed) *trace << "  excluded: " << cell.failure << "\n";
    }
  }

  if (plan.se_for_best) {
    CellResult& best = result.cells[result.best];
    ModelSpec spec;
    spec.variant = best.variant;
    spec.q = plan.q;
    spec.G = best.G;
    spec.m = best.m;
    spec.eps = plan.eps;
    spec.maxit = plan.maxit;
    spec.bic_uses_observations = plan.bic_uses_observations;
    BootstrapConfig config;
    config.R = plan.R;
    config.seed = plan.seed;
    config.workers = plan.workers;
    if (trace) {
      *trace << "Computing standard errors for the optimal model: ";
      config.progress = nullptr;
    }
    auto boot = bootstrap_se(*best.fit, design, spec, config);
    if (trace) {
      for (int b = 1; b <= plan.R; ++b) *trace << b << "  ... ";
      *trace << "\n";
    }
    best.fit->se = boot.se;
    best.fit->se_failures = boot.failures;
    result.best_se = std::move(boot);
  }
  return result;
}

}  // namespace lqmix
