#pragma once

// Posterior assembly for single-site and multi-site latent count models over
// an unconstrained parameter vector.
//
// Vector layout (all blocks contiguous):
//   GAR:  beta_0 .. beta_W, log sigma
//   GGP:  c, log a, log ell
//   then per site h: [z_lambda if generalized Poisson], f_1 .. f_T
// with lambda = tanh(z_lambda / 2).

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "census/count_likelihoods.hpp"
#include "census/latent_processes.hpp"

namespace census {

enum class LatentKind { Gar, Ggp };
enum class LikelihoodKind { Poisson, GenPoisson };

struct ModelSpec {
  LatentKind latent = LatentKind::Gar;
  int window = 1;  // GAR order; ignored for GGP
  LikelihoodKind likelihood = LikelihoodKind::GenPoisson;
  int sites = 1;
  int train_length = 1;
  PriorConfig priors;
  // When set, any day with lambda < -exp(f_t)/4 makes the likelihood -inf.
  // Otherwise only days where theta + lambda*y <= 0 do.
  bool daily_dispersion_floor = false;
  // Sampler coordinates only: fit() runs NUTS on PosteriorModel's
  // non-centered vector. The density over the packed vector is unaffected.
  bool noncentered = true;

  void validate() const;
  bool has_dispersion() const noexcept { return likelihood == LikelihoodKind::GenPoisson; }
  int alpha_dim() const noexcept { return latent == LatentKind::Gar ? window + 2 : 3; }
  int site_block() const noexcept { return train_length + (has_dispersion() ? 1 : 0); }
  Eigen::Index dim() const noexcept {
    return static_cast<Eigen::Index>(alpha_dim()) + static_cast<Eigen::Index>(sites) * site_block();
  }
  std::string describe() const;
};

using LatentParams = std::variant<GarParams, GgpParams>;

/// One joint posterior draw in constrained coordinates.
struct PosteriorSample {
  LatentParams latent_params;
  std::vector<double> lambda;  // per site; 0 under the Poisson likelihood
  std::vector<LatentSeq> f;    // per site, training days
  int chain = 0;
  int draw = 0;
};

using SiteCounts = std::vector<std::vector<Count>>;

Eigen::VectorXd pack(const ModelSpec& spec, const PosteriorSample& sample);
PosteriorSample unpack(const ModelSpec& spec, const Eigen::VectorXd& v);

/// Column names of the constrained parameterization, in pack order.
std::vector<std::string> parameter_names(const ModelSpec& spec);
/// Constrained values in the order of parameter_names.
Eigen::VectorXd constrained_values(const ModelSpec& spec, const PosteriorSample& sample);
PosteriorSample from_constrained_values(const ModelSpec& spec, const Eigen::VectorXd& values);

/// Log posterior density (up to the evidence) in unconstrained coordinates,
/// including transform log-Jacobians. -inf outside the support.
class PosteriorModel {
 public:
  PosteriorModel(ModelSpec spec, SiteCounts data);

  const ModelSpec& spec() const noexcept { return spec_; }
  const SiteCounts& data() const noexcept { return data_; }
  Eigen::Index dim() const noexcept { return spec_.dim(); }

  double log_density(const Eigen::VectorXd& v) const;
  /// Returns the log density and overwrites `grad`; grad is zero when the
  /// density is -inf.
  double log_density_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const;

  /// f_t = log(y_t + 1), parameters at their prior means, lambda = 0.
  Eigen::VectorXd initial_point() const;

  /// Non-centered coordinates keep the layout above but store standardized
  /// innovations e in place of each site's latents:
  ///   GAR  f_t = beta_0 + sum_tau beta_tau f_{t-tau} + sigma e_t
  ///   GGP  f = c + L e,  L L^T = K + jitter I
  /// The density below is the packed-vector density plus the log-Jacobian
  /// of e -> f, so both describe the same posterior.
  Eigen::VectorXd to_noncentered(const Eigen::VectorXd& v) const;
  Eigen::VectorXd from_noncentered(const Eigen::VectorXd& x) const;
  double noncentered_log_density(const Eigen::VectorXd& x) const;
  /// initial_point() mapped to non-centered coordinates, except that GGP
  /// innovations start at zero with c at the mean log count.
  Eigen::VectorXd noncentered_initial_point() const;
  double noncentered_log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

 private:
  double evaluate(const Eigen::VectorXd& v, Eigen::VectorXd* grad, bool noncentered) const;
  Eigen::MatrixXd ggp_kernel(const GgpParams& p) const;
  // Lower Cholesky factor of k + jitter I; throws NumericalError.
  Eigen::MatrixXd ggp_cholesky(const GgpParams& p, const Eigen::MatrixXd& k) const;
  double site_likelihood(const double* f, const std::vector<Count>& y, double lambda, double* d_f,
                         double* d_lambda) const;

  ModelSpec spec_;
  SiteCounts data_;
  Eigen::VectorXd times_;
};

double log_joint(const ModelSpec& spec, const Eigen::VectorXd& v, const SiteCounts& data);
Eigen::VectorXd grad_log_joint(const ModelSpec& spec, const Eigen::VectorXd& v, const SiteCounts& data);

/// Log mass of count y given log-intensity f under the model's likelihood,
/// with the same feasibility rule as the posterior: -inf when y lies outside
/// the truncated support, or (with `daily_floor`) when lambda < -exp(f)/4.
double latent_count_logpmf(Count y, double f, double lambda, LikelihoodKind kind, bool daily_floor = false) noexcept;

/// Mean of a truncated normal, used for prior-mean initialization.
double truncnormal_mean(const TruncNormalPrior& prior) noexcept;

/// Numerically stable log(1 - tanh(z/2)^2).
double log1m_tanh_half_sq(double z) noexcept;

}  // namespace census
