#pragma once

// Block bootstrap: whole units are resampled with replacement, keeping each
// unit's full measurement sequence, and the model is refit on every replicate.

#include <lqmix/model.hpp>
#include <lqmix/panel.hpp>
#include <lqmix/random.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace lqmix {

/// n draws with replacement from [0, n).
std::vector<Index> resample_indices(Index n, Rng& rng);

/// Resampled dataset; repeated draws of a unit get distinct ids "<id>#<k>".
PanelDataset resample_units(const PanelDataset& data, Rng& rng);

/// sqrt(mean_b (theta_b - theta)^2) elementwise, centred at the original
/// estimate rather than the replicate mean.
VectorXd bootstrap_aggregate(const VectorXd& estimate, const std::vector<VectorXd>& replicates);

/// Runs body(0..count-1) on `workers` threads. Each index runs exactly once.
void parallel_for(int count, int workers, const std::function<void(int)>& body);

enum class RefitStart { at_estimate, deterministic };

struct BootstrapConfig {
  int R = 50;
  std::uint64_t seed = 0;
  RefitStart refit_start = RefitStart::at_estimate;
  int workers = 1;
  /// Receives "Computing standard errors: 1  ... 2  ... " progress.
  std::ostream* progress = nullptr;
};

struct BootstrapResult {
  std::vector<MixtureParams> replicate_params;  // converged replicates, in index order
  MixtureParams se;
  int failures = 0;
};

BootstrapResult bootstrap_se(const FitResult& fit, const DesignSet& design, const ModelSpec& spec,
                             const BootstrapConfig& config);

}  // namespace lqmix
