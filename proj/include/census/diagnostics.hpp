#pragma once

// Convergence diagnostics over multiple chains of scalar draws.

#include <vector>

#include <Eigen/Dense>

#include "census/nuts.hpp"

namespace census {

/// One parameter's draws: chains[c][i] is draw i of chain c.
using ChainDraws = std::vector<std::vector<double>>;

struct DiagnosticValue {
  double value = 0.0;
  bool degenerate = false;  // zero variance across all draws
};

/// Split-chain potential scale reduction factor. Needs at least 2 chains of
/// at least 4 draws each (or 1 chain of at least 4 draws, which is split).
DiagnosticValue rhat(const ChainDraws& chains);

/// Effective sample size of split chains using Geyer's initial monotone
/// sequence estimator on the combined autocorrelation.
DiagnosticValue ess(const ChainDraws& chains);

/// Column `param` of every chain's draw matrix.
ChainDraws column_draws(const std::vector<ChainResult>& chains, Eigen::Index param);

struct ConvergenceSummary {
  Eigen::VectorXd rhat;
  Eigen::VectorXd ess;
  double max_rhat = 0.0;
  double min_ess = 0.0;
  int degenerate_params = 0;
  int total_divergences = 0;
  /// Fraction of parameters with R-hat above `threshold`.
  double fraction_rhat_above(double threshold) const;
};

ConvergenceSummary summarize_convergence(const std::vector<ChainResult>& chains);
/// Same, over per-chain draw matrices (e.g. constrained values); divergences
/// are left at zero.
ConvergenceSummary summarize_convergence(const std::vector<Eigen::MatrixXd>& chain_draws);

}  // namespace census
