#include <lqmix/bootstrap.hpp>

#include <lqmix/em.hpp>

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

namespace lqmix {

std::vector<Index> resample_indices(Index n, Rng& rng) {
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<Index> out(static_cast<std::size_t>(n));
  for (auto& i : out) i = pick(rng);
  return out;
}

PanelDataset resample_units(const PanelDataset& data, Rng& rng) {
  PanelDataset out;
  out.time_grid = data.time_grid;
  out.covariate_names = data.covariate_names;
  std::map<Index, int> draws;
  for (const Index i : resample_indices(data.n(), rng)) {
    UnitRecord u = data.units[static_cast<std::size_t>(i)];
    const int k = ++draws[i];
    u.unit_id += "#" + std::to_string(k);
    out.units.push_back(std::move(u));
  }
  return out;
}

VectorXd bootstrap_aggregate(const VectorXd& estimate, const std::vector<VectorXd>& replicates) {
  if (replicates.empty()) throw BootstrapFailure("no replicates to aggregate");
  VectorXd acc = VectorXd::Zero(estimate.size());
  for (const auto& rep : replicates) acc += (rep - estimate).cwiseAbs2();
  return (acc / static_cast<double>(replicates.size())).cwiseSqrt();
}

void parallel_for(int count, int workers, const std::function<void(int)>& body) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

BootstrapResult bootstrap_se(const FitResult& fit_result, const DesignSet& design,
                             const ModelSpec& spec, const BootstrapConfig& config) {
  if (config.R < 1) throw SpecificationError("bootstrap requires R >= 1");

  std::vector<std::optional<MixtureParams>> replicates(static_cast<std::size_t>(config.R));
  std::mutex progress_mutex;
  int done = 0;
  if (config.progress) *config.progress << "Computing standard errors: ";

  parallel_for(config.R, config.workers, [&](int b) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(b));
    const auto idx = resample_indices(design.n(), rng);
    DesignSet boot;
    boot.fixed_names = design.fixed_names;
    boot.tc_names = design.tc_names;
    boot.tv_names = design.tv_names;
    boot.grid_size = design.grid_size;
    boot.units.reserve(idx.size());
    for (const Index i : idx) boot.units.push_back(design.units[static_cast<std::size_t>(i)]);

    ModelSpec rspec = spec;
    const MixtureParams* start = nullptr;
    if (spec.variant != Variant::homogeneous && config.refit_start == RefitStart::at_estimate) {
      rspec.start = StartRule::supplied;
      start = &fit_result.params;
    } else if (rspec.start == StartRule::supplied) {
      rspec.start = StartRule::deterministic;
    }
    try {
      FitResult r = fit(boot, rspec, start);
      if (r.converged) {
        canonicalize(r.params);
        replicates[static_cast<std::size_t>(b)] = std::move(r.params);
      }
    } catch (const Error&) {
    }
    if (config.progress) {
      std::lock_guard lock(progress_mutex);
      *config.progress << ++done << "  ... " << std::flush;
    }
  });
  if (config.progress) *config.progress << "\n";

  BootstrapResult result;
  std::vector<VectorXd> flat;
  for (auto& rep : replicates) {
    if (!rep) {
      ++result.failures;
      continue;
    }
    flat.push_back(rep->flatten());
    result.replicate_params.push_back(std::move(*rep));
  }
  if (flat.empty()) throw BootstrapFailure("every bootstrap replicate failed to converge");
  result.se = MixtureParams::unflatten(fit_result.params,
                                       bootstrap_aggregate(fit_result.params.flatten(), flat));
  return result;
}

}  // namespace lqmix
