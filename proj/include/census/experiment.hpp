#pragma once

// Experiment orchestration: fitting, hyperparameter grid search, the
// retrospective and prospective protocols, and synthetic data generation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "census/baselines.hpp"
#include "census/diagnostics.hpp"
#include "census/forecast.hpp"
#include "census/model.hpp"
#include "census/nuts.hpp"
#include "census/series.hpp"

namespace census {

struct ModelChoice {
  LatentKind latent = LatentKind::Gar;
  int window = 1;
  LikelihoodKind likelihood = LikelihoodKind::GenPoisson;
  double length_scale_mean = 10.0;
  bool multi_site = false;
  bool daily_dispersion_floor = false;
  bool noncentered = true;
};

/// Loaded from a JSON file; see README for the keys. Relative paths are
/// resolved against the config file's directory.
struct ExperimentConfig {
  std::string counts_path;
  std::string state_path;              // optional; enables the rescaled OLS baseline
  std::string external_forecast_path;  // optional; enables the rescaled external baseline
  ModelChoice model;
  PriorConfig priors;
  SamplerConfig sampler;
  SplitSpec split;
  std::vector<int> window_grid{1, 2, 5, 7, 10, 14};
  std::vector<double> length_scale_grid{0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  bool run_grid_search = true;
  int group_size = 500;
  int baseline_window = 28;
  int prospective_holdout = 0;  // days withheld from the end for MAE; 0 forecasts past the data
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  bool screen_anomalies = false;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& json_text, const std::string& base_dir = ".");
  std::string to_json() const;
  void validate() const;
};

/// Deterministic child seed for a named sub-run.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

ModelSpec make_spec(const ModelChoice& model, const PriorConfig& priors, int sites, int train_length);
SiteCounts to_site_counts(const std::vector<CountSeries>& series);

struct FitResult {
  ModelSpec spec;
  std::vector<ChainResult> chains;            // empty when loaded from a draw file
  std::vector<PosteriorSample> samples;       // chain-major
  std::vector<Eigen::MatrixXd> constrained;   // per chain, columns named by `names`
  std::vector<std::string> names;
  ConvergenceSummary convergence;             // over constrained values
};

FitResult fit(const ModelSpec& spec, const SiteCounts& data, const SamplerConfig& cfg);
/// Rebuilds samples and diagnostics from stored constrained draws.
FitResult fit_from_draws(const ModelSpec& spec, const std::vector<std::string>& names,
                         const std::vector<Eigen::MatrixXd>& constrained);

struct GridPoint {
  double value = 0.0;
  HeldoutScore score;
  double max_rhat = 0.0;
  double fraction_rhat_above = 0.0;  // share of parameters with R-hat > 1.1
  bool flagged = false;
};

struct GridSearchResult {
  LatentKind latent = LatentKind::Gar;
  std::string site;
  std::vector<GridPoint> points;
  std::size_t best = 0;
  double best_value() const { return points.at(best).value; }
};

/// Picks the index with the highest mean score among unflagged points (all
/// points when every one is flagged); ties go to the earlier, smaller value.
std::size_t select_grid_point(const std::vector<GridPoint>& points);

/// Fits each grid value on the training split and scores the validation days.
GridSearchResult grid_search(const ExperimentConfig& cfg, const CountSeries& series, LatentKind latent,
                             std::uint64_t seed);

struct ModelScore {
  std::string site;
  std::string model;
  double hyperparameter = 0.0;
  HeldoutScore score;
  double max_rhat = 0.0;
  double min_ess = 0.0;
  int divergences = 0;
};

struct RetrospectiveReport {
  std::vector<GridSearchResult> grids;
  std::vector<ModelScore> scores;
  std::vector<AnomalyReport> anomalies;

  std::string table() const;
  std::string to_json() const;
};

/// Per site: single-site GGP and GAR (grid-searched unless disabled, then
/// refit on train + validation), plus multi-site GAR(W=1) fit jointly on all
/// sites; every model is scored on the test days.
RetrospectiveReport run_retrospective(const ExperimentConfig& cfg, const std::vector<CountSeries>& sites);

struct MethodForecast {
  std::string site;
  std::string method;
  Date first_day{};
  std::vector<DaySummary> days;
  std::optional<double> mae;
  bool clamped = false;  // fraction forecast hit [0, 1]
  std::optional<ConvergenceSummary> convergence;  // sampled methods only
};

struct ProspectiveReport {
  std::vector<MethodForecast> forecasts;
  std::vector<AnomalyReport> anomalies;

  std::string to_json() const;
};

ProspectiveReport run_prospective(const ExperimentConfig& cfg, const std::vector<CountSeries>& sites,
                                  const std::optional<CountSeries>& state,
                                  const std::optional<ExternalStateForecast>& external);

struct SimulationSpec {
  LatentKind latent = LatentKind::Gar;
  GarParams gar{Eigen::VectorXd::Zero(2), 0.1};
  GgpParams ggp{4.0, 1.0, 10.0};
  LikelihoodKind likelihood = LikelihoodKind::GenPoisson;
  std::vector<double> lambda{0.0};  // one per site
  int length = 60;
  std::uint64_t seed = 1;
};

struct SimulatedData {
  std::vector<LatentSeq> f;
  SiteCounts y;
  int saturated_draws = 0;
};

/// Draws latents from the latent prior (GAR starts at N(beta_0, sigma)) and
/// counts by inversion with intensity exp(f).
SimulatedData simulate(const SimulationSpec& spec);

}  // namespace census
