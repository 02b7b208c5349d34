#include "census/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

namespace census {

namespace {

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sample & 0xffffffffu), static_cast<std::uint32_t>(sample >> 32),
                    0x85ebca6bu};
  return std::mt19937_64(seq);
}

InversionDraw draw_count(double f, double lambda, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  const double theta = std::exp(f);
  if (!std::isfinite(theta) || theta > kForecastIntensityCeiling) {
    const double mean = lambda < 1.0 ? theta / (1.0 - lambda) : theta;
    const double capped = std::isfinite(mean) ? std::min(mean, 1e15) : 1e15;
    return {static_cast<Count>(std::llround(capped)), true};
  }
  if (theta <= 0.0) return {0, false};
  return detail::genpoisson_invert_raw(theta, lambda, u);
}

Eigen::VectorXd extend_gar(const LatentSeq& f, const GarParams& p, int horizon, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> history(f.data(), f.data() + f.size());
  Eigen::VectorXd out(horizon);
  for (int t = 0; t < horizon; ++t) {
    const double next = gar_forecast_step(std::span<const double>(history), p, normal(rng));
    history.push_back(next);
    out[t] = next;
  }
  return out;
}

Eigen::VectorXd extend_ggp(const LatentSeq& f, const GgpParams& p, int horizon, std::mt19937_64& rng) {
  const Eigen::Index T = f.size();
  const double jitter = default_jitter(p);
  GaussianConditional cond = ggp_conditional(f, day_indices(T), day_indices(horizon, static_cast<double>(T)), p, jitter);
  cond.cov.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(cond.cov);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "GP forecast covariance is not positive definite (a=" << p.a << ", ell=" << p.ell << ")";
    throw NumericalError(msg.str());
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(horizon);
  for (int t = 0; t < horizon; ++t) z[t] = normal(rng);
  return cond.mean + llt.matrixL() * z;
}

double logsumexp(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// Mean and standard error of the mean; SEM is 0 for fewer than two values
// or a non-finite mean.
std::pair<double, double> mean_sem(const std::vector<double>& v) {
  if (v.empty()) return {-kInf, 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2 || !std::isfinite(mean)) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

ForecastResult draw_forecasts(const std::vector<PosteriorSample>& samples, const ModelSpec& spec, int horizon,
                              std::uint64_t seed) {
  spec.validate();
  if (samples.empty()) throw std::invalid_argument("forecasting needs at least one posterior sample");
  if (horizon < 1) throw std::invalid_argument("forecast horizon must be at least 1 day");
  const Eigen::Index S = static_cast<Eigen::Index>(samples.size());

  ForecastResult out;
  out.horizon = horizon;
  out.daily_dispersion_floor = spec.daily_dispersion_floor;
  out.sites.resize(spec.sites);
  out.lambda.assign(spec.sites, std::vector<double>(samples.size(), 0.0));
  for (auto& site : out.sites) {
    site.counts.resize(S, horizon);
    site.latents.resize(S, horizon);
  }

  for (Eigen::Index s = 0; s < S; ++s) {
    const PosteriorSample& sample = samples[s];
    if (static_cast<int>(sample.f.size()) != spec.sites) throw std::invalid_argument("sample has the wrong number of sites");
    out.chain.push_back(sample.chain);
    std::mt19937_64 rng = sample_rng(seed, static_cast<std::size_t>(s));
    for (int h = 0; h < spec.sites; ++h) {
      const double lambda = spec.has_dispersion() ? sample.lambda.at(h) : 0.0;
      out.lambda[h][s] = lambda;
      Eigen::VectorXd future = spec.latent == LatentKind::Gar
                                   ? extend_gar(sample.f[h], std::get<GarParams>(sample.latent_params), horizon, rng)
                                   : extend_ggp(sample.f[h], std::get<GgpParams>(sample.latent_params), horizon, rng);
      SiteForecast& site = out.sites[h];
      site.latents.row(s) = future.transpose();
      for (int t = 0; t < horizon; ++t) {
        const InversionDraw d = draw_count(future[t], lambda, rng);
        site.counts(s, t) = d.value;
        if (d.saturated) ++site.saturated_draws;
      }
    }
  }

  for (auto& site : out.sites) {
    for (int t = 0; t < horizon; ++t) {
      std::vector<double> values(static_cast<std::size_t>(S));
      for (Eigen::Index s = 0; s < S; ++s) values[s] = static_cast<double>(site.counts(s, t));
      site.days.push_back(summarize_day(std::move(values)));
    }
  }
  return out;
}

double nearest_rank(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::clamp(std::ceil(q * n), 1.0, n));
  return sorted[rank - 1];
}

DaySummary summarize_day(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  DaySummary d;
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  d.p025 = nearest_rank(values, 0.025);
  d.median = nearest_rank(values, 0.5);
  d.p975 = nearest_rank(values, 0.975);
  return d;
}

HeldoutScore heldout_loglik(const Eigen::MatrixXd& future_latents, const std::vector<double>& lambda,
                            const std::vector<int>& chain, LikelihoodKind kind, const std::vector<Count>& y_future,
                            int group_size, bool daily_dispersion_floor) {
  const Eigen::Index S = future_latents.rows();
  const Eigen::Index F = future_latents.cols();
  if (S == 0) throw std::invalid_argument("heldout scoring needs at least one draw");
  if (F < 1 || static_cast<Eigen::Index>(y_future.size()) != F) {
    throw std::invalid_argument("future counts must have one entry per forecast day");
  }
  if (static_cast<Eigen::Index>(lambda.size()) != S || static_cast<Eigen::Index>(chain.size()) != S) {
    throw std::invalid_argument("lambda and chain ids need one entry per draw");
  }
  if (group_size < 1) throw std::invalid_argument("group size must be positive");

  std::map<int, std::vector<Eigen::Index>> by_chain;
  for (Eigen::Index s = 0; s < S; ++s) by_chain[chain[s]].push_back(s);
  std::size_t smallest = static_cast<std::size_t>(S);
  for (const auto& [id, rows] : by_chain) smallest = std::min(smallest, rows.size());
  const std::size_t g = std::min(static_cast<std::size_t>(group_size), smallest);

  HeldoutScore score;
  score.group_size = static_cast<int>(g);
  const double log_g = std::log(static_cast<double>(g));
  std::vector<double> terms(g);
  for (const auto& [id, rows] : by_chain) {
    const std::size_t groups = rows.size() / g;
    std::vector<double> chain_values;
    for (std::size_t k = 0; k < groups; ++k) {
      for (std::size_t i = 0; i < g; ++i) {
        const Eigen::Index s = rows[k * g + i];
        double ll = 0.0;
        for (Eigen::Index t = 0; t < F && ll > -kInf; ++t) {
          ll += latent_count_logpmf(y_future[t], future_latents(s, t), lambda[s], kind, daily_dispersion_floor);
        }
        terms[i] = ll;
      }
      const double lse = logsumexp(terms);
      if (lse == -kInf) score.degenerate = true;
      const double value = (lse - log_g) / static_cast<double>(F);
      score.group_values.push_back(value);
      score.group_chain.push_back(id);
      chain_values.push_back(value);
    }
    const auto [m, se] = mean_sem(chain_values);
    score.chain_ids.push_back(id);
    score.chain_means.push_back(m);
    score.chain_sems.push_back(se);
  }
  score.group_count = static_cast<int>(score.group_values.size());
  score.retained_draws = score.group_count * score.group_size;

  std::tie(score.mean, score.sem) = mean_sem(score.group_values);
  return score;
}

HeldoutScore heldout_loglik(const ForecastResult& forecast, int site, LikelihoodKind kind,
                            const std::vector<Count>& y_future, int group_size) {
  if (site < 0 || site >= static_cast<int>(forecast.sites.size())) throw std::out_of_range("site index out of range");
  return heldout_loglik(forecast.sites[site].latents, forecast.lambda[site], forecast.chain, kind, y_future, group_size,
                        forecast.daily_dispersion_floor);
}

double mae(const std::vector<double>& point_forecast, const std::vector<double>& actual) {
  if (point_forecast.size() != actual.size()) {
    std::ostringstream msg;
    msg << "MAE needs equal lengths (forecast " << point_forecast.size() << ", actual " << actual.size() << ")";
    throw std::invalid_argument(msg.str());
  }
  if (actual.empty()) throw std::invalid_argument("MAE of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::fabs(point_forecast[i] - actual[i]);
  return s / static_cast<double>(actual.size());
}

std::vector<double> point_forecast(const SiteForecast& site) {
  std::vector<double> out;
  if (site.counts.size() == 0) {
    for (const auto& d : site.days) out.push_back(d.mean);
    return out;
  }
  for (Eigen::Index t = 0; t < site.counts.cols(); ++t) out.push_back(site.counts.col(t).cast<double>().mean());
  return out;
}

}  // namespace census
