#pragma once

// No-U-Turn sampler with multinomial trajectory sampling, the generalized
// no-U-turn criterion, dual-averaging step-size adaptation and windowed
// diagonal mass-matrix adaptation.
//
// REFERENCE: Hoffman, M.D. and Gelman, A., 2014. The No-U-Turn
// sampler: adaptively setting path lengths in Hamiltonian Monte
// Carlo. J. Mach. Learn. Res., 15(1), pp.1593-1623.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace census {

struct SamplerConfig {
  int n_chains = 2;
  int n_warmup = 1000;
  int n_draws = 5000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  bool parallel_chains = false;

  void validate() const;
};

/// Log density and its gradient at q; must write grad (same size as q).
/// Returning -inf marks q outside the support.
using LogDensityGradient = std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd& grad)>;

struct ChainResult {
  int chain = 0;
  Eigen::MatrixXd draws;          // n_draws x dim
  Eigen::VectorXd log_density;    // per draw
  Eigen::VectorXd accept_stat;    // per draw
  std::vector<int> tree_depth;    // per draw
  int divergences = 0;            // post-warmup
  int warmup_divergences = 0;
  double step_size = 0.0;
  Eigen::VectorXd inv_mass;
  bool divergence_warning = false;  // more than 10% divergent transitions

  double mean_accept_stat() const { return accept_stat.size() ? accept_stat.mean() : 0.0; }
};

/// Runs cfg.n_chains independent chains from `init`. Chain c draws from an
/// RNG stream derived from (cfg.seed, c), so results are reproducible and
/// independent of whether chains run in parallel.
std::vector<ChainResult> nuts_sample(const LogDensityGradient& target, const Eigen::VectorXd& init,
                                     const SamplerConfig& cfg);

ChainResult nuts_chain(const LogDensityGradient& target, const Eigen::VectorXd& init, const SamplerConfig& cfg,
                       int chain_index);

// ---- building blocks --------------------------------------------------------

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};

/// Potential plus kinetic energy under the diagonal metric.
double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_mass);

/// One velocity-Verlet step of size eps (negative eps integrates backwards).
void leapfrog(PhasePoint& z, const Eigen::VectorXd& inv_mass, double eps, const LogDensityGradient& target);

class DualAveraging {
 public:
  explicit DualAveraging(double target_accept, double gamma = 0.05, double t0 = 10.0, double kappa = 0.75)
      : delta_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double initial_step) {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
    mu_ = std::log(10.0 * initial_step);
  }
  /// Feeds one acceptance statistic and returns the next step size.
  double update(double accept_stat);
  double final_step() const { return std::exp(x_bar_); }

 private:
  double delta_;
  double gamma_;
  double t0_;
  double kappa_;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  double mu_ = std::log(10.0);
};

/// Warmup schedule: an initial fast buffer, doubling slow windows for the
/// mass matrix, and a terminal fast buffer.
class WindowedAdaptation {
 public:
  explicit WindowedAdaptation(int n_warmup, int init_buffer = 75, int term_buffer = 50, int base_window = 25);

  /// True if draw `iteration` (0-based) contributes to the variance estimate.
  bool in_slow_window(int iteration) const;
  /// True if a slow window closes after draw `iteration`.
  bool window_ends(int iteration) const;
  /// Advance past a closed window.
  void next_window();

  int init_buffer() const noexcept { return init_buffer_; }
  int term_buffer() const noexcept { return term_buffer_; }

 private:
  int n_warmup_;
  int init_buffer_;
  int term_buffer_;
  int window_size_;
  int next_window_end_;
  bool enabled_ = true;
};

}  // namespace census
