#pragma once

// Count likelihoods: Poisson and generalized Poisson mass functions, their
// moments and gradients, an inversion sampler, and the truncated-normal
// density used for priors.

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace census {

using Count = std::int64_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Generalized Poisson parameters. Feasible when theta > 0 and
/// max(-1, -theta/4) <= lambda <= 1; lambda = 0 is the standard Poisson.
struct GenPoissonParams {
  double theta = 1.0;
  double lambda = 0.0;

  bool valid() const noexcept;
};

/// Normal(mean, stddev) truncated to [lower, upper]. Either bound may be
/// infinite; HalfNormal(s) is {0, s, 0, +inf}.
struct TruncNormalPrior {
  double mean = 0.0;
  double stddev = 1.0;
  double lower = -kInf;
  double upper = kInf;

  bool valid() const noexcept;
  static TruncNormalPrior half_normal(double stddev) { return {0.0, stddev, 0.0, kInf}; }
};

struct GenPoissonGradient {
  double d_theta = 0.0;
  double d_lambda = 0.0;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Result of one inversion draw. `saturated` is set when the cumulative
/// mass did not reach u before the support cap; `value` is then the cap.
struct InversionDraw {
  Count value = 0;
  bool saturated = false;
};

/// Thrown by genpoisson_sample when the inversion hits its support cap.
class SaturationError : public std::runtime_error {
 public:
  SaturationError(const std::string& what, Count cap, double reached)
      : std::runtime_error(what), cap_(cap), reached_(reached) {}
  Count cap() const noexcept { return cap_; }
  double reached_mass() const noexcept { return reached_; }

 private:
  Count cap_;
  double reached_;
};

double poisson_logpmf(Count y, double theta);

/// log[(1/y!) theta (theta + lambda y)^(y-1) exp(-theta - lambda y)].
/// Returns -inf where lambda < 0 truncates the support (theta + lambda y <= 0).
/// The truncated mass is not renormalized.
double genpoisson_logpmf(Count y, const GenPoissonParams& p);

GenPoissonGradient genpoisson_grad_logpmf(Count y, const GenPoissonParams& p);

Moments genpoisson_mean_var(const GenPoissonParams& p);

/// Number of support points the inversion sampler will visit before giving up.
Count genpoisson_support_cap(const GenPoissonParams& p);

/// Smallest y with CDF(y) >= u, accumulating the mass function term by term.
/// For lambda < 0 the draw never exceeds the last point of the truncated
/// support.
InversionDraw genpoisson_invert(const GenPoissonParams& p, double u);

/// As genpoisson_invert, but a saturated draw raises SaturationError.
Count genpoisson_sample(const GenPoissonParams& p, double u);

double normal_logpdf(double x, double mean, double stddev) noexcept;
double std_normal_cdf(double z) noexcept;

/// log Pr(lower <= X <= upper) for X ~ Normal(mean, stddev).
double normal_interval_logmass(double mean, double stddev, double lower, double upper) noexcept;

double truncnormal_logpdf(double x, const TruncNormalPrior& prior);

/// d/dx of truncnormal_logpdf inside the support.
inline double truncnormal_dlogpdf(double x, const TruncNormalPrior& prior) noexcept {
  return -(x - prior.mean) / (prior.stddev * prior.stddev);
}

namespace detail {

// Unvalidated kernels for the hot path of the posterior, where theta varies
// per day and infeasible combinations must map to -inf rather than throw.
double genpoisson_logpmf_raw(Count y, double theta, double lambda) noexcept;
double poisson_logpmf_raw(Count y, double theta) noexcept;
// Inversion without the lambda >= -theta/4 check; requires theta > 0 and
// lambda in [-1, 1].
InversionDraw genpoisson_invert_raw(double theta, double lambda, double u);

}  // namespace detail

}  // namespace census
