#include "census/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace census {

namespace {

ChainDraws split_chains(const ChainDraws& chains) {
  if (chains.empty()) throw std::invalid_argument("diagnostics need at least one chain");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw std::invalid_argument("diagnostics need at least 4 draws per chain");
  const std::size_t half = n / 2;
  ChainDraws out;
  for (const auto& c : chains) {
    // Odd lengths drop the middle draw.
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(n - half), c.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

double mean_of(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double sample_variance(const std::vector<double>& x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

bool all_constant(const ChainDraws& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains) {
    for (double v : c) {
      if (v != first) return false;
    }
  }
  return true;
}

// Biased autocovariance at one lag.
double autocovariance(const std::vector<double>& x, double mean, std::size_t lag) {
  double s = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) s += (x[i] - mean) * (x[i + lag] - mean);
  return s / static_cast<double>(x.size());
}

}  // namespace

DiagnosticValue rhat(const ChainDraws& chains) {
  const ChainDraws split = split_chains(chains);
  if (all_constant(split)) return {1.0, true};
  const std::size_t n = split.front().size();
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : split) {
    means.push_back(mean_of(c));
    within += sample_variance(c);
  }
  within /= static_cast<double>(split.size());
  const double between_over_n = sample_variance(means);
  const double nd = static_cast<double>(n);
  const double var_plus = (nd - 1.0) / nd * within + between_over_n;
  if (within <= 0.0) return {std::numeric_limits<double>::infinity(), false};
  return {std::sqrt(var_plus / within), false};
}

DiagnosticValue ess(const ChainDraws& chains) {
  const ChainDraws split = split_chains(chains);
  if (all_constant(split)) return {0.0, true};
  const std::size_t m = split.size();
  const std::size_t n = split.front().size();
  const double nd = static_cast<double>(n);

  std::vector<double> means(m);
  std::vector<double> chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(split[c]);
    chain_var[c] = autocovariance(split[c], means[c], 0) * nd / (nd - 1.0);
  }
  const double mean_var = mean_of(chain_var);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += sample_variance(means);
  if (!(var_plus > 0.0)) return {0.0, true};

  auto mean_acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += autocovariance(split[c], means[c], lag);
    return s / static_cast<double>(m);
  };

  std::vector<double> rho(n + 2, 0.0);
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;

  // Geyer's initial positive sequence over pairs of lags.
  std::size_t s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[s + 1] = rho_even;
      rho[s + 2] = rho_odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  if (rho_even > 0.0) rho[max_s + 1] = rho_even;

  // Initial monotone sequence.
  for (std::size_t k = 1; k + 3 <= max_s; k += 2) {
    if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
      rho[k + 1] = 0.5 * (rho[k - 1] + rho[k]);
      rho[k + 2] = rho[k + 1];
    }
  }

  const double total = static_cast<double>(m) * nd;
  double tau = -1.0 + rho[max_s + 1];
  for (std::size_t k = 0; k < max_s; ++k) tau += 2.0 * rho[k];
  return {std::min(total / tau, total * std::log10(total)), false};
}

ChainDraws column_draws(const std::vector<ChainResult>& chains, Eigen::Index param) {
  ChainDraws out;
  for (const auto& c : chains) {
    const Eigen::VectorXd col = c.draws.col(param);
    out.emplace_back(col.data(), col.data() + col.size());
  }
  return out;
}

double ConvergenceSummary::fraction_rhat_above(double threshold) const {
  if (rhat.size() == 0) return 0.0;
  return static_cast<double>((rhat.array() > threshold).count()) / static_cast<double>(rhat.size());
}

ConvergenceSummary summarize_convergence(const std::vector<Eigen::MatrixXd>& chain_draws) {
  if (chain_draws.empty()) throw std::invalid_argument("no chains to summarize");
  const Eigen::Index dim = chain_draws.front().cols();
  ConvergenceSummary s;
  s.rhat.resize(dim);
  s.ess.resize(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    ChainDraws cols;
    for (const auto& m : chain_draws) {
      const Eigen::VectorXd col = m.col(j);
      cols.emplace_back(col.data(), col.data() + col.size());
    }
    const DiagnosticValue r = rhat(cols);
    const DiagnosticValue e = ess(cols);
    s.rhat[j] = r.value;
    s.ess[j] = e.value;
    if (r.degenerate) ++s.degenerate_params;
  }
  s.max_rhat = dim > 0 ? s.rhat.maxCoeff() : 1.0;
  s.min_ess = dim > 0 ? s.ess.minCoeff() : 0.0;
  return s;
}

ConvergenceSummary summarize_convergence(const std::vector<ChainResult>& chains) {
  std::vector<Eigen::MatrixXd> draws;
  for (const auto& c : chains) draws.push_back(c.draws);
  ConvergenceSummary s = summarize_convergence(draws);
  for (const auto& c : chains) s.total_divergences += c.divergences;
  return s;
}

}  // namespace census
