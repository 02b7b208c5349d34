// census: command-line front end for fitting, forecasting and evaluating
// daily census count models.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "census/experiment.hpp"
#include "census/io.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace census;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool screen = false;
};

ExperimentConfig load_config(const Globals& g) {
  if (g.config.empty()) throw std::invalid_argument("--config is required for this command");
  ExperimentConfig cfg = ExperimentConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (g.screen) cfg.screen_anomalies = true;
  cfg.sampler.seed = cfg.seed;
  return cfg;
}

std::vector<CountSeries> load_sites(const ExperimentConfig& cfg) {
  if (cfg.counts_path.empty()) throw std::invalid_argument("config needs data.counts");
  std::vector<CountSeries> sites = ingest_csv(cfg.counts_path);
  if (cfg.screen_anomalies) {
    for (const auto& s : sites) {
      const AnomalyReport r = screen_anomalies(s);
      std::cerr << "screen " << s.site << ": " << (r.passed() ? "pass" : "FAIL");
      for (Date d : r.zero_days) std::cerr << " zero@" << format_date(d);
      for (Date d : r.jump_days) std::cerr << " jump@" << format_date(d);
      std::cerr << "\n";
    }
  }
  return sites;
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

// Training windows for `fit`: the training split, training plus validation,
// or every day.
std::vector<CountSeries> fit_window(const std::vector<CountSeries>& sites, const ExperimentConfig& cfg,
                                    const std::string& window) {
  std::vector<CountSeries> out;
  for (const auto& s : sites) {
    if (window == "all") {
      out.push_back(s);
    } else {
      const SeriesSplit parts = split(s, cfg.split);
      out.push_back(window == "train" ? parts.train : parts.train_val());
    }
  }
  return out;
}

std::vector<CountSeries> select_sites(const std::vector<CountSeries>& sites, const ExperimentConfig& cfg,
                                      const std::string& site) {
  if (cfg.model.multi_site) {
    if (cfg.model.latent != LatentKind::Gar) throw std::invalid_argument("the multi-site model needs GAR latents");
    return sites;
  }
  if (!site.empty()) {
    for (const auto& s : sites) {
      if (s.site == site) return {s};
    }
    throw std::invalid_argument("no site named '" + site + "'");
  }
  if (sites.size() != 1) throw std::invalid_argument("several sites in the data; pick one with --site or set model.multi_site");
  return sites;
}

struct StoredFit {
  FitResult fit;
  std::vector<std::string> sites;
  Date start{};
};

void save_fit(const std::string& dir, const ExperimentConfig& cfg, const FitResult& f,
              const std::vector<CountSeries>& window) {
  write_draws_csv((fs::path(dir) / "draws.csv").string(), {f.names, f.constrained});
  Json j;
  j["config"] = Json::parse(cfg.to_json());
  j["sites"] = Json::array();
  for (const auto& s : window) j["sites"].push_back(s.site);
  j["start"] = format_date(window[0].start);
  j["end"] = format_date(window[0].end());
  j["model"] = f.spec.describe();
  j["train_length"] = f.spec.train_length;
  j["max_rhat"] = f.convergence.max_rhat;
  j["min_ess"] = f.convergence.min_ess;
  j["divergences"] = f.convergence.total_divergences;
  write_text((fs::path(dir) / "fit.json").string(), j.dump(2) + "\n");
}

StoredFit load_fit(const std::string& dir) {
  const Json j = Json::parse(read_text((fs::path(dir) / "fit.json").string()));
  const ExperimentConfig cfg = ExperimentConfig::parse(j.at("config").dump(), ".");
  StoredFit s;
  s.sites = j.at("sites").get<std::vector<std::string>>();
  s.start = parse_date(j.at("start").get<std::string>());
  const ModelSpec spec =
      make_spec(cfg.model, cfg.priors, static_cast<int>(s.sites.size()), j.at("train_length").get<int>());
  const DrawTable t = read_draws_csv((fs::path(dir) / "draws.csv").string());
  s.fit = fit_from_draws(spec, t.names, t.chains);
  return s;
}

void print_convergence(const FitResult& f) {
  std::cout << f.spec.describe() << ": max R-hat " << f.convergence.max_rhat << ", min ESS " << f.convergence.min_ess
            << ", divergences " << f.convergence.total_divergences << "\n";
}

int cmd_fit(const Globals& g, const std::string& site, const std::string& window) {
  const ExperimentConfig cfg = load_config(g);
  const auto sites = fit_window(select_sites(load_sites(cfg), cfg, site), cfg, window);
  const ModelSpec spec = make_spec(cfg.model, cfg.priors, static_cast<int>(sites.size()), static_cast<int>(sites[0].size()));
  const FitResult f = fit(spec, to_site_counts(sites), cfg.sampler);
  save_fit(cfg.output_dir, cfg, f, sites);
  print_convergence(f);
  return 0;
}

StoredFit fit_or_load(const ExperimentConfig& cfg, const std::string& draws, const std::string& site,
                      const std::string& window) {
  if (!draws.empty()) return load_fit(draws);
  const auto sites = fit_window(select_sites(load_sites(cfg), cfg, site), cfg, window);
  const ModelSpec spec = make_spec(cfg.model, cfg.priors, static_cast<int>(sites.size()), static_cast<int>(sites[0].size()));
  StoredFit s{fit(spec, to_site_counts(sites), cfg.sampler), {}, sites[0].start};
  for (const auto& x : sites) s.sites.push_back(x.site);
  save_fit(cfg.output_dir, cfg, s.fit, sites);
  return s;
}

int cmd_forecast(const Globals& g, const std::string& draws, const std::string& site, const std::string& window) {
  const ExperimentConfig cfg = load_config(g);
  const StoredFit s = fit_or_load(cfg, draws, site, window);
  const ForecastResult fc = draw_forecasts(s.fit.samples, s.fit.spec, cfg.split.horizon, derive_seed(cfg.seed, 7));
  const Date first = s.start + std::chrono::days(s.fit.spec.train_length);
  for (std::size_t h = 0; h < s.sites.size(); ++h) {
    const std::string path = (fs::path(cfg.output_dir) / ("forecast_" + safe_name(s.sites[h]) + ".csv")).string();
    write_forecast_csv(path, first, fc.sites[h].days);
    std::cout << "wrote " << path;
    if (fc.sites[h].saturated_draws > 0) std::cout << " (" << fc.sites[h].saturated_draws << " saturated draws)";
    std::cout << "\n";
  }
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& draws, const std::string& site, const std::string& window) {
  const ExperimentConfig cfg = load_config(g);
  const StoredFit s = fit_or_load(cfg, draws, site, window);
  const auto all = load_sites(cfg);
  const ForecastResult fc = draw_forecasts(s.fit.samples, s.fit.spec, cfg.split.horizon, derive_seed(cfg.seed, 7));
  const Date first = s.start + std::chrono::days(s.fit.spec.train_length);
  Json out = Json::array();
  for (std::size_t h = 0; h < s.sites.size(); ++h) {
    const CountSeries* series = nullptr;
    for (const auto& x : all) {
      if (x.site == s.sites[h]) series = &x;
    }
    if (!series) throw std::invalid_argument("site '" + s.sites[h] + "' is missing from the data");
    const CountSeries future = series->between(first, first + std::chrono::days(cfg.split.horizon - 1));
    const HeldoutScore score = heldout_loglik(fc, static_cast<int>(h), s.fit.spec.likelihood, future.counts, cfg.group_size);
    const double err = mae(point_forecast(fc.sites[h]), future.as_double());
    std::cout << s.sites[h] << ": heldout " << score.mean << " +- " << score.sem << " (" << score.group_count
              << " groups of " << score.group_size << "), MAE " << err << "\n";
    out.push_back({{"site", s.sites[h]},
                   {"first_day", format_date(first)},
                   {"score_mean", score.mean},
                   {"score_sem", score.sem},
                   {"chain_means", score.chain_means},
                   {"chain_sems", score.chain_sems},
                   {"group_size", score.group_size},
                   {"group_count", score.group_count},
                   {"mae", err}});
  }
  write_text((fs::path(cfg.output_dir) / "evaluation.json").string(), out.dump(2) + "\n");
  return 0;
}

int cmd_grid_search(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const auto sites = load_sites(cfg);
  Json out = Json::array();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const GridSearchResult r = grid_search(cfg, sites[i], cfg.model.latent, derive_seed(cfg.seed, i));
    Json pts = Json::array();
    for (const auto& p : r.points) {
      std::cout << sites[i].site << " " << (r.latent == LatentKind::Gar ? "W=" : "mu_ell=") << p.value << ": "
                << p.score.mean << " +- " << p.score.sem << (p.flagged ? " [flagged]" : "") << "\n";
      pts.push_back({{"value", p.value}, {"score_mean", p.score.mean}, {"score_sem", p.score.sem},
                     {"max_rhat", p.max_rhat}, {"flagged", p.flagged}});
    }
    std::cout << sites[i].site << " best: " << r.best_value() << "\n";
    out.push_back({{"site", sites[i].site}, {"best", r.best_value()}, {"points", pts}});
  }
  write_text((fs::path(cfg.output_dir) / "grid_search.json").string(), out.dump(2) + "\n");
  return 0;
}

int cmd_retrospective(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const RetrospectiveReport r = run_retrospective(cfg, load_sites(cfg));
  write_text((fs::path(cfg.output_dir) / "retrospective.json").string(), r.to_json());
  write_text((fs::path(cfg.output_dir) / "retrospective.txt").string(), r.table());
  std::cout << r.table();
  return 0;
}

int cmd_prospective(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const auto sites = load_sites(cfg);
  std::optional<CountSeries> state;
  if (!cfg.state_path.empty()) state = ingest_csv(cfg.state_path).at(0);
  std::optional<ExternalStateForecast> external;
  if (!cfg.external_forecast_path.empty()) external = read_external_forecast(cfg.external_forecast_path);
  const ProspectiveReport r = run_prospective(cfg, sites, state, external);
  write_text((fs::path(cfg.output_dir) / "prospective.json").string(), r.to_json());
  for (const auto& f : r.forecasts) {
    const std::string path =
        (fs::path(cfg.output_dir) / ("forecast_" + safe_name(f.site) + "_" + safe_name(f.method) + ".csv")).string();
    write_forecast_csv(path, f.first_day, f.days);
    std::cout << f.site << " " << f.method;
    if (f.mae) std::cout << ": MAE " << *f.mae;
    if (f.clamped) std::cout << " (fraction clamped)";
    if (f.convergence) {
      std::cout << " (max R-hat " << f.convergence->max_rhat << ", min ESS " << f.convergence->min_ess << ")";
    }
    std::cout << "\n";
  }
  return 0;
}

struct SimulateArgs {
  std::string latent = "gar";
  std::vector<double> beta{0.05, 0.98};
  double sigma = 0.05;
  double c = 4.0;
  double a = 1.0;
  double ell = 10.0;
  std::string likelihood = "genpoisson";
  std::vector<double> lambda{-0.3};
  int sites = 1;
  int length = 60;
  std::string start = "2020-03-01";
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  SimulationSpec spec;
  spec.latent = a.latent == "ggp" ? LatentKind::Ggp : LatentKind::Gar;
  spec.gar.beta = Eigen::Map<const Eigen::VectorXd>(a.beta.data(), static_cast<Eigen::Index>(a.beta.size()));
  spec.gar.sigma = a.sigma;
  spec.ggp = {a.c, a.a, a.ell};
  spec.likelihood = a.likelihood == "poisson" ? LikelihoodKind::Poisson : LikelihoodKind::GenPoisson;
  spec.lambda = a.lambda;
  if (a.sites > 1 && spec.lambda.size() == 1) spec.lambda.assign(static_cast<std::size_t>(a.sites), a.lambda[0]);
  if (static_cast<int>(spec.lambda.size()) != a.sites) throw std::invalid_argument("give one --lambda or one per site");
  spec.length = a.length;
  spec.seed = g.seed.value_or(1);
  const SimulatedData d = simulate(spec);
  std::vector<CountSeries> series;
  for (int h = 0; h < a.sites; ++h) {
    series.push_back({a.sites == 1 ? "simulated" : "site" + std::to_string(h + 1), parse_date(a.start), d.y[h]});
  }
  const std::string path = g.out.empty() ? "simulated.csv" : g.out;
  write_counts_csv(path, series);
  std::cout << "wrote " << path;
  if (d.saturated_draws > 0) std::cout << " (" << d.saturated_draws << " saturated draws)";
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian forecasting of daily hospital census counts"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed; overrides the config");
  app.add_option("--out", g.out, "Output directory (output file for simulate)");
  app.add_flag("--screen-anomalies", g.screen, "Report sites with zero days or isolated jumps of more than 50");

  std::string site;
  std::string window = "train_val";
  std::string draws;
  auto add_fit_opts = [&](CLI::App* cmd) {
    cmd->add_option("--site", site, "Site to fit when the data has several");
    cmd->add_option("--window", window, "Days to fit on")->check(CLI::IsMember({"train", "train_val", "all"}));
  };
  auto* fit_cmd = app.add_subcommand("fit", "Sample the posterior and write draws.csv and fit.json");
  add_fit_opts(fit_cmd);
  auto* forecast_cmd = app.add_subcommand("forecast", "Write forecast tables from stored or fresh draws");
  add_fit_opts(forecast_cmd);
  forecast_cmd->add_option("--draws", draws, "Directory holding draws.csv and fit.json");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score forecasts against the days after the fit window");
  add_fit_opts(evaluate_cmd);
  evaluate_cmd->add_option("--draws", draws, "Directory holding draws.csv and fit.json");
  auto* grid_cmd = app.add_subcommand("grid-search", "Validation-set search over W or mu_ell");
  auto* retro_cmd = app.add_subcommand("retrospective", "GGP, GAR and multi-site GAR scored on the test days");
  auto* prosp_cmd = app.add_subcommand("prospective", "GAR forecasts and rescaled state baselines");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic counts from a latent count model");
  sim_cmd->add_option("--latent", sim.latent)->check(CLI::IsMember({"gar", "ggp"}));
  sim_cmd->add_option("--beta", sim.beta, "GAR coefficients beta_0..beta_W")->delimiter(',');
  sim_cmd->add_option("--sigma", sim.sigma);
  sim_cmd->add_option("--c", sim.c);
  sim_cmd->add_option("--a", sim.a);
  sim_cmd->add_option("--ell", sim.ell);
  sim_cmd->add_option("--likelihood", sim.likelihood)->check(CLI::IsMember({"genpoisson", "poisson"}));
  sim_cmd->add_option("--lambda", sim.lambda, "Dispersion, one value or one per site")->delimiter(',');
  sim_cmd->add_option("--sites", sim.sites);
  sim_cmd->add_option("--length", sim.length);
  sim_cmd->add_option("--start", sim.start, "First date (YYYY-MM-DD)");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (fit_cmd->parsed()) return cmd_fit(g, site, window);
    if (forecast_cmd->parsed()) return cmd_forecast(g, draws, site, window);
    if (evaluate_cmd->parsed()) return cmd_evaluate(g, draws, site, window);
    if (grid_cmd->parsed()) return cmd_grid_search(g);
    if (retro_cmd->parsed()) return cmd_retrospective(g);
    if (prosp_cmd->parsed()) return cmd_prospective(g);
    if (sim_cmd->parsed()) return cmd_simulate(g, sim);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
