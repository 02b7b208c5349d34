#include "census/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace census {

TrendForecast ols_trend_forecast(const std::vector<double>& y, int horizon, double level) {
  if (y.size() < 3) throw std::invalid_argument("OLS trend needs at least 3 points");
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1 day");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("interval level must lie in (0, 1)");
  const double n = static_cast<double>(y.size());
  const double xbar = (n - 1.0) / 2.0;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxx += dx * dx;
    sxy += dx * (y[i] - ybar);
  }
  TrendForecast out;
  out.fit.n = static_cast<int>(y.size());
  out.fit.slope = sxy / sxx;
  out.fit.intercept = ybar - out.fit.slope * xbar;
  double sse = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - (out.fit.intercept + out.fit.slope * static_cast<double>(i));
    sse += r * r;
  }
  out.fit.residual_sd = std::sqrt(sse / (n - 2.0));

  const boost::math::students_t dist(n - 2.0);
  const double tq = boost::math::quantile(dist, 0.5 + 0.5 * level);
  for (int k = 0; k < horizon; ++k) {
    const double x = n + static_cast<double>(k);
    const double mean = out.fit.intercept + out.fit.slope * x;
    const double half = tq * out.fit.residual_sd * std::sqrt(1.0 + 1.0 / n + (x - xbar) * (x - xbar) / sxx);
    out.days.push_back({mean, mean - half, mean + half});
  }
  return out;
}

FractionForecast fraction_forecast(const CountSeries& site, const CountSeries& state, int horizon, int window) {
  if (window < 3) throw std::invalid_argument("fraction window must be at least 3 days");
  if (site.size() < static_cast<std::size_t>(window)) {
    throw std::invalid_argument("site '" + site.site + "' has fewer than " + std::to_string(window) + " days");
  }
  const Date to = site.end();
  const Date from = to - std::chrono::days(window - 1);
  const CountSeries s = site.between(from, to);
  const CountSeries st = state.between(from, to);
  std::vector<double> frac;
  std::vector<std::string> zero_days;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (st.counts[i] <= 0) {
      zero_days.push_back(format_date(st.date(i)));
      continue;
    }
    frac.push_back(static_cast<double>(s.counts[i]) / static_cast<double>(st.counts[i]));
  }
  if (!zero_days.empty()) {
    std::string msg = "state count is zero on";
    for (const auto& d : zero_days) msg += " " + d;
    throw std::invalid_argument(msg);
  }
  FractionForecast out;
  for (IntervalForecast d : ols_trend_forecast(frac, horizon).days) {
    const IntervalForecast raw = d;
    d.mean = std::clamp(d.mean, 0.0, 1.0);
    d.lower = std::clamp(d.lower, 0.0, 1.0);
    d.upper = std::clamp(d.upper, 0.0, 1.0);
    if (d.mean != raw.mean || d.lower != raw.lower || d.upper != raw.upper) out.clamped = true;
    out.days.push_back(d);
  }
  return out;
}

std::vector<IntervalForecast> rescale(const std::vector<IntervalForecast>& fraction,
                                      const std::vector<IntervalForecast>& state) {
  if (fraction.size() != state.size()) {
    std::ostringstream msg;
    msg << "fraction horizon " << fraction.size() << " does not match state horizon " << state.size();
    throw std::invalid_argument(msg.str());
  }
  std::vector<IntervalForecast> out;
  for (std::size_t i = 0; i < fraction.size(); ++i) {
    out.push_back({fraction[i].mean * state[i].mean, fraction[i].lower * state[i].lower,
                   fraction[i].upper * state[i].upper});
  }
  return out;
}

void ExternalStateForecast::validate() const {
  if (dates.size() != days.size()) throw std::invalid_argument("external forecast needs one row per date");
  for (std::size_t i = 0; i < days.size(); ++i) {
    if (!(days[i].lower <= days[i].mean && days[i].mean <= days[i].upper)) {
      throw std::invalid_argument("external forecast row " + format_date(dates[i]) + " violates lower <= mean <= upper");
    }
    if (i > 0 && dates[i] != dates[i - 1] + std::chrono::days(1)) {
      throw std::invalid_argument("external forecast dates are not contiguous at " + format_date(dates[i]));
    }
  }
}

std::vector<IntervalForecast> ExternalStateForecast::window(Date from, int horizon) const {
  if (dates.empty() || from < dates.front() ||
      from + std::chrono::days(horizon - 1) > dates.back()) {
    throw std::invalid_argument("external forecast does not cover " + std::to_string(horizon) + " days from " +
                                format_date(from));
  }
  const auto off = static_cast<std::size_t>((from - dates.front()).count());
  return {days.begin() + static_cast<std::ptrdiff_t>(off), days.begin() + static_cast<std::ptrdiff_t>(off + horizon)};
}

}  // namespace census
