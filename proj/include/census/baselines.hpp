#pragma once

// Rescaled state-level baselines: an OLS trend on the trailing window, the
// site's fraction of state volume, and the bound-product rescaling.

#include <vector>

#include "census/series.hpp"

namespace census {

struct IntervalForecast {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct OlsFit {
  double intercept = 0.0;
  double slope = 0.0;
  double residual_sd = 0.0;
  int n = 0;
};

struct TrendForecast {
  OlsFit fit;
  std::vector<IntervalForecast> days;
};

/// Least squares on day index 0..n-1, forecasting days n..n+horizon-1 with
/// prediction intervals s * t_{(1+level)/2, n-2} * sqrt(1 + 1/n + (x - xbar)^2 / Sxx).
TrendForecast ols_trend_forecast(const std::vector<double>& y, int horizon, double level = 0.95);

struct FractionForecast {
  std::vector<IntervalForecast> days;
  bool clamped = false;  // some mean or bound was moved into [0, 1]
};

/// OLS trend on site/state over the `window` days ending at the site's last
/// date, clamped to [0, 1].
FractionForecast fraction_forecast(const CountSeries& site, const CountSeries& state, int horizon, int window = 28);

/// Site-level forecast: mean = fraction mean * state mean, lower = lower *
/// lower, upper = upper * upper.
std::vector<IntervalForecast> rescale(const std::vector<IntervalForecast>& fraction,
                                      const std::vector<IntervalForecast>& state);

/// A point state forecast as a degenerate interval.
inline IntervalForecast point_interval(double v) { return {v, v, v}; }

struct ExternalStateForecast {
  std::vector<Date> dates;
  std::vector<IntervalForecast> days;

  void validate() const;
  /// Days dated [from, from + horizon).
  std::vector<IntervalForecast> window(Date from, int horizon) const;
};

}  // namespace census
