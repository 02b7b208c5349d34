#include "census/latent_processes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace census {

void GarParams::validate() const {
  if (beta.size() < 1) throw std::invalid_argument("GAR needs at least an intercept");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("GAR sigma must be positive");
  if (!beta.allFinite()) throw std::invalid_argument("GAR coefficients must be finite");
}

void GgpParams::validate() const {
  if (!std::isfinite(c)) throw std::invalid_argument("GP mean must be finite");
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("GP amplitude must be positive");
  if (!(ell > 0.0) || !std::isfinite(ell)) throw std::invalid_argument("GP time-scale must be positive");
}

PriorConfig PriorConfig::with_length_scale_mean(double length_scale_mean) {
  if (!(length_scale_mean >= 0.0)) throw std::invalid_argument("time-scale prior mean must be non-negative");
  PriorConfig cfg;
  cfg.ell.mean = length_scale_mean;
  return cfg;
}

void PriorConfig::validate() const {
  for (const auto* prior : {&beta0, &beta1, &beta_rest, &sigma, &c, &a, &ell, &lambda}) {
    if (!prior->valid()) throw std::invalid_argument("prior with non-positive stddev or empty support");
  }
}

// ---- GAR ------------------------------------------------------------------

namespace detail {

double gar_logdensity_accumulate(const double* f, Eigen::Index n, const GarParams& p, double* d_f,
                                 double* d_beta, double* d_sigma) {
  const int window = p.window();
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  const double log_norm = -std::log(p.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  double sum_sq = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const int lags = static_cast<int>(std::min<Eigen::Index>(t, window));
    double mean = p.beta[0];
    for (int tau = 1; tau <= lags; ++tau) mean += p.beta[tau] * f[t - tau];
    const double resid = f[t] - mean;
    sum_sq += resid * resid;
    if (d_f != nullptr) {
      const double g = resid * inv_var;
      d_f[t] -= g;
      d_beta[0] += g;
      for (int tau = 1; tau <= lags; ++tau) {
        d_f[t - tau] += g * p.beta[tau];
        d_beta[tau] += g * f[t - tau];
      }
    }
  }
  if (d_sigma != nullptr) *d_sigma += -static_cast<double>(n) / p.sigma + sum_sq * inv_var / p.sigma;
  return static_cast<double>(n) * log_norm - 0.5 * sum_sq * inv_var;
}

}  // namespace detail

double gar_logdensity(const LatentSeq& f, const GarParams& p) {
  p.validate();
  return detail::gar_logdensity_accumulate(f.data(), f.size(), p, nullptr, nullptr, nullptr);
}

GarGradient gar_grad_logdensity(const LatentSeq& f, const GarParams& p) {
  p.validate();
  GarGradient g;
  g.d_f = Eigen::VectorXd::Zero(f.size());
  g.d_beta = Eigen::VectorXd::Zero(p.beta.size());
  detail::gar_logdensity_accumulate(f.data(), f.size(), p, g.d_f.data(), g.d_beta.data(), &g.d_sigma);
  return g;
}

double gar_forecast_step(std::span<const double> history, const GarParams& p, double noise) {
  if (history.empty()) throw std::invalid_argument("GAR forecast needs at least one past latent value");
  const auto lags = std::min<std::size_t>(history.size(), static_cast<std::size_t>(p.window()));
  double mean = p.beta[0];
  for (std::size_t tau = 1; tau <= lags; ++tau) mean += p.beta[static_cast<Eigen::Index>(tau)] * history[history.size() - tau];
  return mean + p.sigma * noise;
}

// ---- GGP ------------------------------------------------------------------

Eigen::VectorXd day_indices(Eigen::Index n, double offset) {
  return Eigen::VectorXd::LinSpaced(n, offset, offset + static_cast<double>(n) - 1.0);
}

Eigen::MatrixXd se_kernel_matrix(const Eigen::VectorXd& times1, const Eigen::VectorXd& times2,
                                 const GgpParams& p) {
  p.validate();
  const double amp2 = p.a * p.a;
  const double inv_two_ell2 = 1.0 / (2.0 * p.ell * p.ell);
  Eigen::MatrixXd k(times1.size(), times2.size());
  for (Eigen::Index j = 0; j < times2.size(); ++j) {
    for (Eigen::Index i = 0; i < times1.size(); ++i) {
      const double d = times1[i] - times2[j];
      k(i, j) = amp2 * std::exp(-d * d * inv_two_ell2);
    }
  }
  return k;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_covariance(const Eigen::MatrixXd& k, double jitter) {
  Eigen::MatrixXd cov = k;
  cov.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "GP covariance of size " << k.rows() << " is not positive definite after jitter " << jitter;
    throw NumericalError(msg.str());
  }
  return llt;
}

}  // namespace

double ggp_logdensity(const LatentSeq& f, const GgpParams& p, double jitter) {
  const Eigen::VectorXd times = day_indices(f.size());
  const auto llt = factor_covariance(se_kernel_matrix(times, times, p), jitter);
  const Eigen::VectorXd resid = f.array() - p.c;
  const Eigen::VectorXd white = llt.matrixL().solve(resid);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * white.squaredNorm() - 0.5 * log_det -
         0.5 * static_cast<double>(f.size()) * std::log(2.0 * std::numbers::pi);
}

GgpGradient ggp_grad_logdensity(const LatentSeq& f, const GgpParams& p, double jitter) {
  const Eigen::Index n = f.size();
  const Eigen::VectorXd times = day_indices(n);
  const Eigen::MatrixXd k = se_kernel_matrix(times, times, p);
  const auto llt = factor_covariance(k, jitter);
  const Eigen::VectorXd resid = f.array() - p.c;
  const Eigen::VectorXd alpha = llt.solve(resid);
  const Eigen::MatrixXd cov_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));

  // d log p / d theta = 0.5 tr((alpha alpha^T - Sigma^{-1}) dSigma/dtheta)
  double d_a = 0.0;
  double d_ell = 0.0;
  const double ell3 = p.ell * p.ell * p.ell;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = alpha[i] * alpha[j] - cov_inv(i, j);
      const double d = times[i] - times[j];
      d_a += w * k(i, j);
      d_ell += w * k(i, j) * d * d;
    }
  }
  GgpGradient g;
  g.d_f = -alpha;
  g.d_c = alpha.sum();
  g.d_a = d_a / p.a;  // 0.5 * sum(w * 2K/a)
  g.d_ell = 0.5 * d_ell / ell3;
  g.d_jitter = 0.5 * (alpha.squaredNorm() - cov_inv.trace());
  return g;
}

GaussianConditional ggp_conditional(const LatentSeq& past_f, const Eigen::VectorXd& past_times,
                                    const Eigen::VectorXd& future_times, const GgpParams& p,
                                    double jitter) {
  if (past_f.size() != past_times.size()) throw std::invalid_argument("past latents and times differ in length");
  GaussianConditional out;
  const Eigen::Index m = future_times.size();
  out.mean = Eigen::VectorXd::Constant(m, p.c);
  out.cov = se_kernel_matrix(future_times, future_times, p);
  if (m == 0 || past_f.size() == 0) return out;

  const auto llt = factor_covariance(se_kernel_matrix(past_times, past_times, p), jitter);
  const Eigen::MatrixXd cross = se_kernel_matrix(past_times, future_times, p);
  const Eigen::VectorXd resid = past_f.array() - p.c;
  out.mean += cross.transpose() * llt.solve(resid);
  const Eigen::MatrixXd half = llt.matrixL().solve(cross);
  out.cov -= half.transpose() * half;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

// ---- priors ---------------------------------------------------------------

double prior_logdensity(const GarParams& p, const PriorConfig& cfg) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) lp += truncnormal_logpdf(p.beta[i], cfg.beta_prior(static_cast<int>(i)));
  lp += truncnormal_logpdf(p.sigma, cfg.sigma);
  return lp;
}

double prior_logdensity(const GgpParams& p, const PriorConfig& cfg) {
  return truncnormal_logpdf(p.c, cfg.c) + truncnormal_logpdf(p.a, cfg.a) + truncnormal_logpdf(p.ell, cfg.ell);
}

double prior_logdensity(const DispersionParams& p, const PriorConfig& cfg) {
  double lp = 0.0;
  for (double lam : p.lambda) lp += truncnormal_logpdf(lam, cfg.lambda);
  return lp;
}

}  // namespace census
