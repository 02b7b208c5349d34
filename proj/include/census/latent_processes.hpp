#pragma once

// Latent log-intensity priors: the order-W autoregression (GAR) and the
// constant-mean squared-exponential Gaussian process (GGP), plus the
// parameter priors shared by both models.

#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "census/count_likelihoods.hpp"

namespace census {

/// beta = [intercept, lag-1 coefficient, ..., lag-W coefficient].
struct GarParams {
  Eigen::VectorXd beta;
  double sigma = 0.1;

  int window() const noexcept { return static_cast<int>(beta.size()) - 1; }
  void validate() const;
};

struct GgpParams {
  double c = 4.0;    // constant mean
  double a = 1.0;    // kernel amplitude
  double ell = 10.0; // time-scale in days

  void validate() const;
};

/// Log-scale latent intensity, one entry per day.
using LatentSeq = Eigen::VectorXd;

struct PriorConfig {
  TruncNormalPrior beta0{0.0, 0.1};
  TruncNormalPrior beta1{1.0, 0.1};
  TruncNormalPrior beta_rest{0.0, 0.1};
  TruncNormalPrior sigma = TruncNormalPrior::half_normal(0.1);
  TruncNormalPrior c{4.0, 2.0, 0.0, kInf};
  TruncNormalPrior a = TruncNormalPrior::half_normal(2.0);
  TruncNormalPrior ell{0.0, 2.0, 0.0, kInf};
  TruncNormalPrior lambda{0.0, 0.3, -1.0, 1.0};

  /// Defaults with the time-scale prior centred on `length_scale_mean`.
  static PriorConfig with_length_scale_mean(double length_scale_mean);
  double length_scale_mean() const noexcept { return ell.mean; }
  const TruncNormalPrior& beta_prior(int index) const noexcept {
    return index == 0 ? beta0 : (index == 1 ? beta1 : beta_rest);
  }
  void validate() const;
};

/// Raised when a covariance stays non-positive-definite after jitter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- GAR ------------------------------------------------------------------

/// Sum over t of log N(f_t | beta_0 + sum_{tau <= min(t-1, W)} beta_tau f_{t-tau}, sigma^2).
double gar_logdensity(const LatentSeq& f, const GarParams& p);

struct GarGradient {
  Eigen::VectorXd d_f;
  Eigen::VectorXd d_beta;
  double d_sigma = 0.0;
};

GarGradient gar_grad_logdensity(const LatentSeq& f, const GarParams& p);

/// One step of the autoregression past the end of `history`; the window is
/// truncated when the history is shorter than W.
double gar_forecast_step(std::span<const double> history, const GarParams& p, double noise);

// ---- GGP ------------------------------------------------------------------

Eigen::MatrixXd se_kernel_matrix(const Eigen::VectorXd& times1, const Eigen::VectorXd& times2,
                                 const GgpParams& p);

/// Multivariate normal log-density of f under mean c and covariance
/// K(t, t) + jitter I on days 0..T-1.
double ggp_logdensity(const LatentSeq& f, const GgpParams& p, double jitter);

struct GgpGradient {
  Eigen::VectorXd d_f;
  double d_c = 0.0;
  double d_a = 0.0;
  double d_ell = 0.0;
  double d_jitter = 0.0;
};

GgpGradient ggp_grad_logdensity(const LatentSeq& f, const GgpParams& p, double jitter);

struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// GP predictive at `future_times` given latents at `past_times`. The
/// returned covariance carries no jitter; samplers add their own.
GaussianConditional ggp_conditional(const LatentSeq& past_f, const Eigen::VectorXd& past_times,
                                    const Eigen::VectorXd& future_times, const GgpParams& p,
                                    double jitter);

/// Day indices 0..n-1 (or offset..offset+n-1).
Eigen::VectorXd day_indices(Eigen::Index n, double offset = 0.0);

/// Jitter used by the models: 1e-6 a^2.
inline double default_jitter(const GgpParams& p) noexcept { return 1e-6 * p.a * p.a; }

// ---- priors ---------------------------------------------------------------

struct DispersionParams {
  std::vector<double> lambda;  // one per site
};

double prior_logdensity(const GarParams& p, const PriorConfig& cfg);
double prior_logdensity(const GgpParams& p, const PriorConfig& cfg);
double prior_logdensity(const DispersionParams& p, const PriorConfig& cfg);

namespace detail {

// Accumulating kernels used by the posterior; gradients are added into the
// output arguments.
double gar_logdensity_accumulate(const double* f, Eigen::Index n, const GarParams& p, double* d_f,
                                 double* d_beta, double* d_sigma);

}  // namespace detail

}  // namespace census
