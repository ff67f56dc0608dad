#pragma once

// Synthetic panels drawn from TC / TV / TCTV quantile mixtures, and exact
// likelihood / posterior oracles by exhaustive enumeration.

#include <lqmix/model.hpp>
#include <lqmix/panel.hpp>
#include <lqmix/random.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lqmix {

enum class CovariateLaw {
  uniform,      // U(0, 1) per row
  normal,       // N(0, 1) per row
  binary_unit,  // Bernoulli(1/2), constant within a unit
  time,         // the occasion number 1..T
};

struct CovariateSpec {
  std::string name;
  CovariateLaw law = CovariateLaw::uniform;
};

enum class ErrorLaw { ald, gaussian, chi_square };

struct GeneratorSpec {
  Variant variant = Variant::homogeneous;
  MixtureParams true_params;
  QuantileLevel q{0.5};
  Index n = 100;
  Index T = 5;
  std::vector<CovariateSpec> covariates;
  DesignRoles roles;
  ErrorLaw error_law = ErrorLaw::ald;
  /// ALD scale, or the multiplier of the standardized gaussian / chi-square draw.
  double error_scale = 1.0;
  double chi_square_df = 3.0;
  /// Per-occasion probability of dropping out for good (after the first occasion).
  double dropout_hazard = 0.0;
  /// Per-occasion probability of an intermittent gap. Every unit keeps at least one row.
  double gap_probability = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Latent draws behind a simulated dataset, over all T occasions.
struct LatentTruth {
  std::vector<Index> component;            // per unit
  std::vector<std::vector<Index>> states;  // per unit, length T
  std::vector<VectorXd> location;          // per unit, length T
};

/// Units are named "1".."n" and occasions 1..T. The returned dataset holds the
/// observed rows only.
std::pair<PanelDataset, LatentTruth> simulate(const GeneratorSpec& genspec);

/// Error draw whose q-quantile is exactly 0.
double draw_error(ErrorLaw law, double scale, double q, double chi_square_df, Rng& rng);

inline constexpr double kEnumerationLimit = 1e6;

/// Exact log-likelihood by enumerating component x state paths over the
/// observed occasions; a gap of k steps is bridged by Gamma^k. Throws SizeError
/// when a unit needs more than kEnumerationLimit terms.
double brute_force_loglik(const MixtureParams& params, const DesignSet& design, QuantileLevel q);

/// Exact posteriors by enumerating full state paths over each unit's span
/// (unobserved occasions carry no emission).
Posteriors brute_force_posteriors(const MixtureParams& params, const DesignSet& design,
                                  QuantileLevel q);

}  // namespace lqmix
