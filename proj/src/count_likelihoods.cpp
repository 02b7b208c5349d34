#include "census/count_likelihoods.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace census {

namespace {

// Hard ceiling on the inversion loop, reached only when lambda is at or
// numerically indistinguishable from 1.
constexpr Count kMaxSupportPoints = 10'000'000;

void require_valid(const GenPoissonParams& p) {
  if (!p.valid()) {
    std::ostringstream msg;
    msg << "generalized Poisson parameters out of domain: theta=" << p.theta
        << " lambda=" << p.lambda << " (need theta > 0, max(-1, -theta/4) <= lambda <= 1)";
    throw std::domain_error(msg.str());
  }
}

}  // namespace

bool GenPoissonParams::valid() const noexcept {
  return std::isfinite(theta) && theta > 0.0 && std::isfinite(lambda) && lambda <= 1.0 &&
         lambda >= std::max(-1.0, -theta / 4.0);
}

bool TruncNormalPrior::valid() const noexcept {
  return std::isfinite(mean) && std::isfinite(stddev) && stddev > 0.0 && lower < upper &&
         !std::isnan(lower) && !std::isnan(upper);
}

namespace detail {

double poisson_logpmf_raw(Count y, double theta) noexcept {
  if (y == 0) return -theta;
  return static_cast<double>(y) * std::log(theta) - theta - std::lgamma(static_cast<double>(y) + 1.0);
}

double genpoisson_logpmf_raw(Count y, double theta, double lambda) noexcept {
  if (y == 0) return -theta;
  const double yd = static_cast<double>(y);
  const double shifted = theta + lambda * yd;
  if (!(shifted > 0.0)) return -kInf;
  return std::log(theta) + (yd - 1.0) * std::log(shifted) - shifted - std::lgamma(yd + 1.0);
}

}  // namespace detail

double poisson_logpmf(Count y, double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw std::domain_error("Poisson rate must be positive and finite");
  if (y < 0) throw std::domain_error("count must be non-negative");
  return detail::poisson_logpmf_raw(y, theta);
}

double genpoisson_logpmf(Count y, const GenPoissonParams& p) {
  require_valid(p);
  if (y < 0) throw std::domain_error("count must be non-negative");
  return detail::genpoisson_logpmf_raw(y, p.theta, p.lambda);
}

GenPoissonGradient genpoisson_grad_logpmf(Count y, const GenPoissonParams& p) {
  require_valid(p);
  if (y < 0) throw std::domain_error("count must be non-negative");
  const double yd = static_cast<double>(y);
  const double shifted = p.theta + p.lambda * yd;
  if (!(shifted > 0.0)) {
    std::ostringstream msg;
    msg << "log-mass is -inf at y=" << y << " (theta + lambda*y = " << shifted << ")";
    throw std::domain_error(msg.str());
  }
  return {1.0 / p.theta + (yd - 1.0) / shifted - 1.0, yd * (yd - 1.0) / shifted - yd};
}

Moments genpoisson_mean_var(const GenPoissonParams& p) {
  require_valid(p);
  if (p.lambda >= 1.0) throw std::domain_error("generalized Poisson moments diverge at lambda = 1");
  const double slack = 1.0 - p.lambda;
  return {p.theta / slack, p.theta / (slack * slack * slack)};
}

Count genpoisson_support_cap(const GenPoissonParams& p) {
  require_valid(p);
  if (p.lambda >= 1.0) return kMaxSupportPoints;
  const Moments m = genpoisson_mean_var(p);
  const double cap = 10.0 * (m.mean + 20.0 * std::sqrt(m.variance));
  if (!(cap < static_cast<double>(kMaxSupportPoints))) return kMaxSupportPoints;
  return std::max<Count>(1, static_cast<Count>(std::ceil(cap)));
}

InversionDraw genpoisson_invert(const GenPoissonParams& p, double u) {
  require_valid(p);
  return detail::genpoisson_invert_raw(p.theta, p.lambda, u);
}

namespace detail {

InversionDraw genpoisson_invert_raw(double theta, double lambda, double u) {
  if (!(theta > 0.0) || !std::isfinite(theta) || !(lambda >= -1.0 && lambda <= 1.0)) {
    throw std::domain_error("inversion needs theta > 0 and lambda in [-1, 1]");
  }
  if (!(u >= 0.0 && u < 1.0)) throw std::domain_error("inversion requires u in [0, 1)");
  Count cap = kMaxSupportPoints;
  if (lambda < 1.0) {
    const double slack = 1.0 - lambda;
    const double bound = 10.0 * (theta / slack + 20.0 * std::sqrt(theta / (slack * slack * slack)));
    if (bound < static_cast<double>(kMaxSupportPoints)) cap = std::max<Count>(1, static_cast<Count>(std::ceil(bound)));
  }
  double cdf = 0.0;
  for (Count y = 0; y <= cap; ++y) {
    const double logp = genpoisson_logpmf_raw(y, theta, lambda);
    if (logp == -kInf && y > 0 && lambda < 0.0) {
      // Past the truncated support; the missing mass is the documented deficiency.
      return {y - 1, false};
    }
    cdf += std::exp(logp);
    if (cdf >= u) return {y, false};
  }
  return {cap, true};
}

}  // namespace detail

Count genpoisson_sample(const GenPoissonParams& p, double u) {
  const InversionDraw draw = genpoisson_invert(p, u);
  if (draw.saturated) {
    std::ostringstream msg;
    msg << "generalized Poisson inversion saturated at cap " << draw.value << " for theta=" << p.theta
        << " lambda=" << p.lambda << " u=" << u;
    throw SaturationError(msg.str(), draw.value, u);
  }
  return draw.value;
}

double normal_logpdf(double x, double mean, double stddev) noexcept {
  const double z = (x - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double std_normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_interval_logmass(double mean, double stddev, double lower, double upper) noexcept {
  const double a = (lower - mean) / stddev;
  const double b = (upper - mean) / stddev;
  // Work in whichever tail keeps the subtraction away from cancellation.
  double mass;
  if (a > 0.0) {
    mass = 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
  } else {
    mass = 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
  }
  return std::log(mass);
}

double truncnormal_logpdf(double x, const TruncNormalPrior& prior) {
  if (!prior.valid()) throw std::domain_error("truncated normal prior needs stddev > 0 and lower < upper");
  if (std::isnan(x) || x < prior.lower || x > prior.upper) return -kInf;
  double logp = normal_logpdf(x, prior.mean, prior.stddev);
  if (std::isfinite(prior.lower) || std::isfinite(prior.upper)) {
    logp -= normal_interval_logmass(prior.mean, prior.stddev, prior.lower, prior.upper);
  }
  return logp;
}

}  // namespace census
