#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "census/experiment.hpp"
#include "census/io.hpp"

using namespace census;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

GridPoint point(double value, double score, bool flagged = false) {
  GridPoint p;
  p.value = value;
  p.score.mean = score;
  p.flagged = flagged;
  return p;
}

ExperimentConfig quick_config() {
  ExperimentConfig cfg;
  cfg.sampler.n_chains = 2;
  cfg.sampler.n_warmup = 150;
  cfg.sampler.n_draws = 100;
  cfg.run_grid_search = false;
  cfg.group_size = 50;
  cfg.split = SplitSpec{5, 5, 5};
  cfg.seed = 4;
  return cfg;
}

CountSeries simulated_site(const std::string& name, std::uint64_t seed, int length) {
  SimulationSpec sim;
  sim.gar.beta = Eigen::Vector2d(0.3, 0.9);
  sim.gar.sigma = 0.05;
  sim.lambda = {0.1};
  sim.length = length;
  sim.seed = seed;
  const SimulatedData d = simulate(sim);
  return CountSeries{name, parse_date("2020-04-01"), d.y[0]};
}

}  // namespace

TEST_CASE("select_grid_point", "[experiment]") {
  CHECK(select_grid_point({point(1, -4.0)}) == 0);
  CHECK(select_grid_point({point(1, -3.0), point(2, -2.5)}) == 1);
  // Ties go to the earlier (smaller) value.
  CHECK(select_grid_point({point(1, -2.5), point(2, -2.5), point(5, -3.0)}) == 0);
  // Flagged points are skipped unless every point is flagged.
  CHECK(select_grid_point({point(1, -1.0, true), point(2, -2.5), point(5, -3.0)}) == 1);
  CHECK(select_grid_point({point(1, -3.0, true), point(2, -2.5, true)}) == 1);
  CHECK_THROWS(select_grid_point({}));
}

TEST_CASE("derive_seed", "[experiment]") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
}

TEST_CASE("ExperimentConfig parsing", "[experiment]") {
  const std::string text = R"({
    "data": {"counts": "data/sites.csv", "state": "/abs/state.csv"},
    "model": {"latent": "ggp", "window": 2, "likelihood": "poisson", "length_scale_mean": 15},
    "priors": {"lambda": {"mean": 0, "stddev": 0.2, "lower": -1, "upper": 1},
               "c": {"mean": 3, "stddev": 1, "lower": 0, "upper": null}},
    "sampler": {"chains": 3, "warmup": 400, "draws": 800, "target_accept": 0.9},
    "split": {"test_days": 7},
    "grid": {"enabled": false, "window": [1, 3], "length_scale_mean": [5, 10]},
    "evaluation": {"group_size": 100},
    "output_dir": "results",
    "seed": 99
  })";
  const ExperimentConfig cfg = ExperimentConfig::parse(text, "/base");
  CHECK(cfg.counts_path == "/base/data/sites.csv");
  CHECK(cfg.state_path == "/abs/state.csv");
  CHECK(cfg.external_forecast_path.empty());
  CHECK(cfg.model.latent == LatentKind::Ggp);
  CHECK(cfg.model.window == 2);
  CHECK(cfg.model.likelihood == LikelihoodKind::Poisson);
  CHECK(cfg.priors.ell.mean == 15.0);
  CHECK(cfg.priors.lambda.stddev == 0.2);
  CHECK(std::isinf(cfg.priors.c.upper));
  CHECK(cfg.priors.c.mean == 3.0);
  CHECK(cfg.sampler.n_chains == 3);
  CHECK(cfg.sampler.n_draws == 800);
  CHECK(cfg.sampler.target_accept == 0.9);
  CHECK(cfg.split.test_days == 7);
  CHECK(cfg.split.val_days == 14);
  CHECK_FALSE(cfg.run_grid_search);
  CHECK(cfg.window_grid == std::vector<int>{1, 3});
  CHECK(cfg.group_size == 100);
  CHECK(cfg.output_dir == "/base/results");
  CHECK(cfg.seed == 99);

  // Serialized config parses back to the same settings.
  const ExperimentConfig again = ExperimentConfig::parse(cfg.to_json(), "/elsewhere");
  CHECK(again.counts_path == cfg.counts_path);
  CHECK(again.to_json() == cfg.to_json());

  const ExperimentConfig defaults = ExperimentConfig::parse("{}");
  CHECK(defaults.window_grid == std::vector<int>{1, 2, 5, 7, 10, 14});
  CHECK(defaults.length_scale_grid.size() == 11);
  CHECK(defaults.length_scale_grid.back() == 50.0);
  CHECK(defaults.sampler.n_draws == 5000);
  CHECK(defaults.model.noncentered);
  const ExperimentConfig centered = ExperimentConfig::parse(R"({"model": {"noncentered": false}})");
  CHECK_FALSE(make_spec(centered.model, centered.priors, 1, 10).noncentered);

  CHECK_THROWS(ExperimentConfig::parse(R"({"model": {"latent": "arima"}})"));
  CHECK_THROWS(ExperimentConfig::parse(R"({"grid": {"window": []}})"));
  CHECK_THROWS(ExperimentConfig::parse(R"({"sampler": {"target_accept": 1.5}})"));
  CHECK_THROWS(ExperimentConfig::parse("{ not json"));
  CHECK_THROWS(ExperimentConfig::load("/nonexistent/config.json"));
}

TEST_CASE("make_spec", "[experiment]") {
  ModelChoice m;
  m.latent = LatentKind::Ggp;
  m.length_scale_mean = 25.0;
  const ModelSpec s = make_spec(m, PriorConfig{}, 1, 41);
  CHECK(s.priors.ell.mean == 25.0);
  CHECK(s.dim() == 45);
  CHECK_THROWS(make_spec(m, PriorConfig{}, 2, 41));
}

TEST_CASE("simulate", "[experiment]") {
  SimulationSpec sim;
  sim.gar.beta = Eigen::Vector2d(0.5, 0.9);
  sim.gar.sigma = 0.05;
  sim.lambda = {0.0, 0.2, -0.1};
  sim.length = 50;
  sim.seed = 3;
  const SimulatedData a = simulate(sim);
  const SimulatedData b = simulate(sim);
  REQUIRE(a.y.size() == 3);
  CHECK(a.y == b.y);
  CHECK(a.f[0] == b.f[0]);
  sim.seed = 4;
  CHECK(simulate(sim).y != a.y);

  // Zero noise: f follows the deterministic recursion from beta_0.
  sim.gar.sigma = 0.0;
  const SimulatedData flat = simulate(sim);
  double expected = 0.5;
  for (int t = 0; t < 50; ++t) {
    CHECK_THAT(flat.f[0][t], WithinAbs(expected, 1e-12));
    expected = 0.5 + 0.9 * expected;
  }

  SimulationSpec gp;
  gp.latent = LatentKind::Ggp;
  gp.ggp = GgpParams{3.0, 0.5, 8.0};
  gp.length = 30;
  const SimulatedData g = simulate(gp);
  CHECK(g.f[0].size() == 30);
  CHECK(g.saturated_draws == 0);

  SimulationSpec bad;
  bad.lambda = {};
  CHECK_THROWS(simulate(bad));
}

TEST_CASE("fit recovers a simple GAR series", "[experiment][slow]") {
  const CountSeries site = simulated_site("a", 11, 40);
  const ModelSpec spec = make_spec(ModelChoice{}, PriorConfig{}, 1, 40);
  SamplerConfig sc;
  sc.n_warmup = 500;
  sc.n_draws = 500;
  sc.seed = 2;
  const FitResult r = fit(spec, to_site_counts({site}), sc);
  CHECK(r.samples.size() == 1000);
  CHECK(r.names.size() == static_cast<std::size_t>(spec.dim()));
  REQUIRE(r.constrained.size() == 2);
  CHECK(r.constrained[0].rows() == 500);
  CHECK(r.convergence.max_rhat < 1.1);
  // sigma stays positive and lambda within its box on every draw.
  for (const auto& m : r.constrained) {
    CHECK(m.col(2).minCoeff() > 0.0);
    CHECK(m.col(3).cwiseAbs().maxCoeff() < 1.0);
  }

  // Rebuilding from stored draws reproduces samples and diagnostics.
  const FitResult back = fit_from_draws(spec, r.names, r.constrained);
  CHECK(back.samples.size() == r.samples.size());
  CHECK(back.convergence.max_rhat == r.convergence.max_rhat);
  CHECK((back.samples[7].f[0] - r.samples[7].f[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("retrospective protocol on a small problem", "[experiment][slow]") {
  const std::vector<CountSeries> sites{simulated_site("a", 21, 25), simulated_site("b", 22, 25)};
  const ExperimentConfig cfg = quick_config();
  const RetrospectiveReport r = run_retrospective(cfg, sites);
  // Per site: GGP, GAR and the jointly fitted multi-site GAR.
  CHECK(r.scores.size() == 6);
  for (const ModelScore& s : r.scores) {
    CHECK(std::isfinite(s.score.mean));
    CHECK(s.score.sem >= 0.0);
    CHECK(s.score.chain_means.size() == 2);
    CHECK(s.score.group_count * s.score.group_size == s.score.retained_draws);
  }
  CHECK_THAT(r.table(), ContainsSubstring("multi-site"));

  // Identical inputs give a byte-identical report.
  CHECK(run_retrospective(cfg, sites).to_json() == r.to_json());
}

TEST_CASE("prospective protocol on a perfect line", "[experiment][slow]") {
  std::vector<Count> site(40), state(40);
  for (int i = 0; i < 40; ++i) {
    state[i] = 1000 + 10 * i;
    site[i] = state[i] / 10;
  }
  ExperimentConfig cfg = quick_config();
  cfg.prospective_holdout = 7;
  cfg.split.horizon = 7;
  const CountSeries s{"a", parse_date("2020-04-01"), site};
  const CountSeries st{"state", parse_date("2020-04-01"), state};
  const ProspectiveReport r = run_prospective(cfg, {s}, st, std::nullopt);
  bool saw_ols = false;
  for (const MethodForecast& m : r.forecasts) {
    CHECK(m.method.find("external") == std::string::npos);
    REQUIRE(m.mae.has_value());
    CHECK(m.days.size() == 7);
    for (const DaySummary& d : m.days) {
      CHECK(d.p025 <= d.median);
      CHECK(d.median <= d.p975);
    }
    if (m.method.find("OLS") != std::string::npos) {
      saw_ols = true;
      CHECK(*m.mae < 1e-6);
    }
  }
  CHECK(saw_ols);
}

TEST_CASE("centered and non-centered sampling target the same posterior", "[experiment][slow][property]") {
  const CountSeries site = simulated_site("a", 31, 20);
  SamplerConfig sc;
  sc.n_warmup = 1000;
  sc.n_draws = 2000;
  sc.seed = 5;
  ModelSpec spec = make_spec(ModelChoice{}, PriorConfig{}, 1, 20);
  const FitResult nc = fit(spec, to_site_counts({site}), sc);
  spec.noncentered = false;
  const FitResult c = fit(spec, to_site_counts({site}), sc);
  REQUIRE(nc.names == c.names);
  // Posterior means agree within 4 combined Monte Carlo standard errors.
  for (Eigen::Index j : {0, 1, 2, 3, 10, 23}) {
    double mean[2], se[2];
    const FitResult* runs[2] = {&nc, &c};
    for (int k = 0; k < 2; ++k) {
      double s = 0.0, sq = 0.0, n = 0.0;
      for (const auto& m : runs[k]->constrained) {
        s += m.col(j).sum();
        sq += m.col(j).squaredNorm();
        n += static_cast<double>(m.rows());
      }
      mean[k] = s / n;
      se[k] = std::sqrt((sq / n - mean[k] * mean[k]) / runs[k]->convergence.ess[j]);
    }
    INFO(nc.names[j] << ": " << mean[0] << " vs " << mean[1]);
    CHECK(std::fabs(mean[0] - mean[1]) < 4.0 * std::hypot(se[0], se[1]));
  }
}
