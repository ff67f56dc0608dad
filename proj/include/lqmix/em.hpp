#pragma once

// Extended EM for linear quantile mixtures with time-constant (TC) and/or
// time-varying (TV, hidden Markov) discrete random coefficients.
//
// Location of row t of unit i under component g and state h:
//   mu = x' betaf + z' betarTC(g, :) + w' betarTV(h, :)
// with an asymmetric Laplace emission of common scale.
//
// Occasions missing inside a unit's sequence keep the chain running on the
// full time grid: the emission term is dropped there, so a gap of k steps
// contributes Gamma^k. The chain starts at the unit's first observed occasion.

#include <lqmix/model.hpp>
#include <lqmix/panel.hpp>

#include <iosfwd>

namespace lqmix {

/// Forward/backward variables for one unit and one component, kept in log
/// space (the normalization is implicit in log-sum-exp).
struct ForwardBackward {
  MatrixXd log_alpha;     // span x m, log P(y_1..s, S_s = h)
  MatrixXd log_beta;      // span x m, log P(y_s+1..S | S_s = h)
  MatrixXd log_emission;  // span x m, zero on unobserved occasions
  double loglik = 0.0;

  /// P(S_s = h | y), span x m.
  MatrixXd state_posterior() const;
  /// P(S_s = h, S_s+1 = k | y) for s in [0, span-1), each m x m.
  std::vector<MatrixXd> transition_posterior(const MatrixXd& Gamma) const;
};

/// Log emission densities of unit `unit` under component g: span x m, with
/// zeros (log 1) on unobserved occasions.
MatrixXd log_emissions(const MixtureParams& params, const UnitDesign& unit, Index g,
                       QuantileLevel q);

ForwardBackward forward_backward(const MixtureParams& params, const UnitDesign& unit, Index g,
                                 QuantileLevel q);

Posteriors e_step(const MixtureParams& params, const DesignSet& design, const ModelSpec& spec);

struct MStepReport {
  std::vector<std::string> degenerate;  // labels of blocks under the mass floor
};

/// `previous` warm-starts the coefficient LP and supplies values for any
/// component or state whose posterior mass is below the floor.
MixtureParams m_step(const Posteriors& post, const DesignSet& design, const ModelSpec& spec,
                     const MixtureParams& previous, MStepReport* report = nullptr);

double loglik(const MixtureParams& params, const DesignSet& design, const ModelSpec& spec);

/// Deterministic, random, or supplied starting values.
MixtureParams init_params(const ModelSpec& spec, const DesignSet& design,
                          const MixtureParams* supplied = nullptr);

/// Sorts components by their first TC location and states by their first TV
/// location; probabilities (and posteriors, when given) follow.
void canonicalize(MixtureParams& params, Posteriors* post = nullptr);

struct FitOptions {
  /// Receives the iteration table (iteration 0, every 10th, last).
  std::ostream* trace = nullptr;
};

FitResult fit(const DesignSet& design, const ModelSpec& spec,
              const MixtureParams* supplied = nullptr, const FitOptions& options = {});

/// Prints the trace table header / row / footer in the package's layout.
void print_trace_header(std::ostream& os, Variant variant);
void print_trace_row(std::ostream& os, Variant variant, const TraceRow& row, Index G, Index m);
void print_trace_footer(std::ostream& os, Variant variant);

}  // namespace lqmix
