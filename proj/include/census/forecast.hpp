#pragma once

// Forecast paths from posterior samples, their per-day summaries, and the
// evaluation metrics: per-day normalized heldout log-likelihood and MAE.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "census/model.hpp"

namespace census {

using CountMatrix = Eigen::Matrix<Count, Eigen::Dynamic, Eigen::Dynamic>;

struct DaySummary {
  double mean = 0.0;
  double p025 = 0.0;
  double median = 0.0;
  double p975 = 0.0;
};

struct SiteForecast {
  CountMatrix counts;       // S x F
  Eigen::MatrixXd latents;  // S x F, the future f used for both paths and scoring
  std::vector<DaySummary> days;
  int saturated_draws = 0;  // count draws that hit the inversion cap
};

struct ForecastResult {
  int horizon = 0;
  std::vector<SiteForecast> sites;
  std::vector<int> chain;   // chain id per sample row
  std::vector<std::vector<double>> lambda;  // [site][sample]
  bool daily_dispersion_floor = false;       // copied from the model spec
};

/// Intensities above this are not inverted term by term; the draw is
/// reported as saturated at the rounded mean instead.
inline constexpr double kForecastIntensityCeiling = 1e6;

/// Extends each sample's latents F days (GAR recursion, or a joint draw from
/// the GP conditional given days 0..T-1) and draws counts by inversion with
/// intensity exp(f). Sample s uses an RNG stream derived from (seed, s).
ForecastResult draw_forecasts(const std::vector<PosteriorSample>& samples, const ModelSpec& spec, int horizon,
                              std::uint64_t seed);

/// Nearest-rank percentile of sorted values: element ceil(q n) (1-based).
double nearest_rank(const std::vector<double>& sorted, double q);

DaySummary summarize_day(std::vector<double> values);

struct HeldoutScore {
  std::vector<double> group_values;
  std::vector<int> group_chain;     // chain id per group
  std::vector<double> chain_means;  // mean of group values per chain, ordered by chain id
  std::vector<double> chain_sems;
  std::vector<int> chain_ids;
  double mean = 0.0;
  double sem = 0.0;
  int group_size = 0;
  int group_count = 0;
  int retained_draws = 0;
  bool degenerate = false;  // some group had zero likelihood for every draw
};

/// Normalized heldout log-likelihood. Draws are grouped within each chain
/// into groups of `group_size` (shrunk to the smallest chain's draw count
/// when needed); leftover draws are dropped. Each group scores
/// (1/F) [logsumexp_s sum_t log p(y_t | f_st, lambda_s) - log |g|].
HeldoutScore heldout_loglik(const Eigen::MatrixXd& future_latents, const std::vector<double>& lambda,
                            const std::vector<int>& chain, LikelihoodKind kind, const std::vector<Count>& y_future,
                            int group_size = 500, bool daily_dispersion_floor = false);

/// Scores site `site` of a forecast against realized counts.
HeldoutScore heldout_loglik(const ForecastResult& forecast, int site, LikelihoodKind kind,
                            const std::vector<Count>& y_future, int group_size = 500);

double mae(const std::vector<double>& point_forecast, const std::vector<double>& actual);

/// Per-day mean of the sampled paths.
std::vector<double> point_forecast(const SiteForecast& site);

}  // namespace census
