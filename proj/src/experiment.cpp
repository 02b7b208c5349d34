#include "census/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "census/io.hpp"

namespace census {

using Json = nlohmann::ordered_json;

namespace {

const char* latent_name(LatentKind k) { return k == LatentKind::Gar ? "gar" : "ggp"; }
const char* likelihood_name(LikelihoodKind k) { return k == LikelihoodKind::GenPoisson ? "genpoisson" : "poisson"; }

LatentKind parse_latent(const std::string& s) {
  if (s == "gar") return LatentKind::Gar;
  if (s == "ggp") return LatentKind::Ggp;
  throw std::invalid_argument("model.latent must be 'gar' or 'ggp', got '" + s + "'");
}

LikelihoodKind parse_likelihood(const std::string& s) {
  if (s == "genpoisson") return LikelihoodKind::GenPoisson;
  if (s == "poisson") return LikelihoodKind::Poisson;
  throw std::invalid_argument("model.likelihood must be 'genpoisson' or 'poisson', got '" + s + "'");
}

double bound_from_json(const Json& j, double fallback) {
  if (j.is_null()) return fallback;
  return j.get<double>();
}

void read_prior(const Json& j, const char* key, TruncNormalPrior& prior) {
  if (!j.contains(key)) return;
  const Json& p = j.at(key);
  prior.mean = p.value("mean", prior.mean);
  prior.stddev = p.value("stddev", prior.stddev);
  if (p.contains("lower")) prior.lower = bound_from_json(p.at("lower"), -kInf);
  if (p.contains("upper")) prior.upper = bound_from_json(p.at("upper"), kInf);
}

Json prior_json(const TruncNormalPrior& p) {
  Json j;
  j["mean"] = p.mean;
  j["stddev"] = p.stddev;
  j["lower"] = std::isfinite(p.lower) ? Json(p.lower) : Json(nullptr);
  j["upper"] = std::isfinite(p.upper) ? Json(p.upper) : Json(nullptr);
  return j;
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(base) / p).lexically_normal().string();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SamplerConfig with_seed(SamplerConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

Json score_json(const HeldoutScore& s) {
  Json j;
  j["mean"] = s.mean;
  j["sem"] = s.sem;
  j["group_size"] = s.group_size;
  j["group_count"] = s.group_count;
  j["chain_ids"] = s.chain_ids;
  j["chain_means"] = s.chain_means;
  j["chain_sems"] = s.chain_sems;
  j["group_values"] = s.group_values;
  j["degenerate"] = s.degenerate;
  return j;
}

Json anomaly_json(const std::vector<AnomalyReport>& reports) {
  Json out = Json::array();
  for (const auto& r : reports) {
    Json j;
    j["site"] = r.site;
    j["passed"] = r.passed();
    Json zeros = Json::array();
    for (Date d : r.zero_days) zeros.push_back(format_date(d));
    Json jumps = Json::array();
    for (Date d : r.jump_days) jumps.push_back(format_date(d));
    j["zero_days"] = zeros;
    j["jump_days"] = jumps;
    out.push_back(j);
  }
  return out;
}

std::vector<AnomalyReport> screen_all(const ExperimentConfig& cfg, const std::vector<CountSeries>& sites) {
  std::vector<AnomalyReport> out;
  if (!cfg.screen_anomalies) return out;
  for (const auto& s : sites) out.push_back(screen_anomalies(s));
  return out;
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return v < 0 ? "-inf" : (v > 0 ? "inf" : "nan");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

InversionDraw simulate_count(double f, double lambda, double u) {
  const double theta = std::exp(f);
  if (!std::isfinite(theta) || theta > kForecastIntensityCeiling) {
    const double mean = std::isfinite(theta) ? theta / (1.0 - std::min(lambda, 0.999)) : 1e15;
    return {static_cast<Count>(std::llround(std::min(mean, 1e15))), true};
  }
  return detail::genpoisson_invert_raw(theta, lambda, u);
}

// Scores a fitted model on the `future` days that follow its training window.
HeldoutScore score_fit(const FitResult& fit, const std::vector<Count>& future, int site, int group_size,
                       std::uint64_t seed) {
  const ForecastResult fc = draw_forecasts(fit.samples, fit.spec, static_cast<int>(future.size()), seed);
  return heldout_loglik(fc, site, fit.spec.likelihood, future, group_size);
}

}  // namespace

// ---- config -----------------------------------------------------------------

ExperimentConfig ExperimentConfig::parse(const std::string& json_text, const std::string& base_dir) {
  const Json j = Json::parse(json_text);
  ExperimentConfig cfg;
  if (j.contains("data")) {
    const Json& d = j.at("data");
    cfg.counts_path = resolve(base_dir, d.value("counts", std::string()));
    cfg.state_path = resolve(base_dir, d.value("state", std::string()));
    cfg.external_forecast_path = resolve(base_dir, d.value("external_forecast", std::string()));
  }
  if (j.contains("model")) {
    const Json& m = j.at("model");
    cfg.model.latent = parse_latent(m.value("latent", std::string("gar")));
    cfg.model.window = m.value("window", cfg.model.window);
    cfg.model.likelihood = parse_likelihood(m.value("likelihood", std::string("genpoisson")));
    cfg.model.length_scale_mean = m.value("length_scale_mean", cfg.model.length_scale_mean);
    cfg.model.multi_site = m.value("multi_site", cfg.model.multi_site);
    cfg.model.daily_dispersion_floor = m.value("daily_dispersion_floor", cfg.model.daily_dispersion_floor);
    cfg.model.noncentered = m.value("noncentered", cfg.model.noncentered);
  }
  if (j.contains("priors")) {
    const Json& p = j.at("priors");
    read_prior(p, "beta0", cfg.priors.beta0);
    read_prior(p, "beta1", cfg.priors.beta1);
    read_prior(p, "beta_rest", cfg.priors.beta_rest);
    read_prior(p, "sigma", cfg.priors.sigma);
    read_prior(p, "c", cfg.priors.c);
    read_prior(p, "a", cfg.priors.a);
    read_prior(p, "ell", cfg.priors.ell);
    read_prior(p, "lambda", cfg.priors.lambda);
  }
  if (j.contains("sampler")) {
    const Json& s = j.at("sampler");
    cfg.sampler.n_chains = s.value("chains", cfg.sampler.n_chains);
    cfg.sampler.n_warmup = s.value("warmup", cfg.sampler.n_warmup);
    cfg.sampler.n_draws = s.value("draws", cfg.sampler.n_draws);
    cfg.sampler.target_accept = s.value("target_accept", cfg.sampler.target_accept);
    cfg.sampler.max_tree_depth = s.value("max_tree_depth", cfg.sampler.max_tree_depth);
    cfg.sampler.parallel_chains = s.value("parallel_chains", cfg.sampler.parallel_chains);
  }
  if (j.contains("split")) {
    const Json& s = j.at("split");
    cfg.split.test_days = s.value("test_days", cfg.split.test_days);
    cfg.split.val_days = s.value("val_days", cfg.split.val_days);
    cfg.split.horizon = s.value("horizon", cfg.split.horizon);
  }
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    cfg.run_grid_search = g.value("enabled", cfg.run_grid_search);
    if (g.contains("window")) cfg.window_grid = g.at("window").get<std::vector<int>>();
    if (g.contains("length_scale_mean")) cfg.length_scale_grid = g.at("length_scale_mean").get<std::vector<double>>();
  }
  if (j.contains("evaluation")) {
    const Json& e = j.at("evaluation");
    cfg.group_size = e.value("group_size", cfg.group_size);
    cfg.baseline_window = e.value("baseline_window", cfg.baseline_window);
    cfg.prospective_holdout = e.value("prospective_holdout", cfg.prospective_holdout);
  }
  cfg.output_dir = resolve(base_dir, j.value("output_dir", cfg.output_dir));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.screen_anomalies = j.value("screen_anomalies", cfg.screen_anomalies);
  cfg.priors.ell.mean = cfg.model.length_scale_mean;
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  ExperimentConfig cfg;
  try {
    cfg = parse(read_text(path), base.empty() ? "." : base);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  for (const std::string* p : {&cfg.counts_path, &cfg.state_path, &cfg.external_forecast_path}) {
    if (!p->empty() && !std::filesystem::exists(*p)) throw std::invalid_argument(path + ": data file " + *p + " does not exist");
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (window_grid.empty() || length_scale_grid.empty()) throw std::invalid_argument("hyperparameter grids must be nonempty");
  for (int w : window_grid) {
    if (w < 1) throw std::invalid_argument("window grid values must be at least 1");
  }
  for (double m : length_scale_grid) {
    if (!(m >= 0.0)) throw std::invalid_argument("length-scale grid values must be nonnegative");
  }
  if (model.window < 1) throw std::invalid_argument("model.window must be at least 1");
  if (group_size < 1) throw std::invalid_argument("evaluation.group_size must be positive");
  if (baseline_window < 3) throw std::invalid_argument("evaluation.baseline_window must be at least 3");
  if (prospective_holdout < 0) throw std::invalid_argument("evaluation.prospective_holdout must be nonnegative");
  sampler.validate();
  split.validate();
  priors.validate();
}

std::string ExperimentConfig::to_json() const {
  Json j;
  j["data"] = {{"counts", counts_path}, {"state", state_path}, {"external_forecast", external_forecast_path}};
  j["model"] = {{"latent", latent_name(model.latent)},
                {"window", model.window},
                {"likelihood", likelihood_name(model.likelihood)},
                {"length_scale_mean", model.length_scale_mean},
                {"multi_site", model.multi_site},
                {"daily_dispersion_floor", model.daily_dispersion_floor},
                {"noncentered", model.noncentered}};
  j["priors"] = {{"beta0", prior_json(priors.beta0)},   {"beta1", prior_json(priors.beta1)},
                 {"beta_rest", prior_json(priors.beta_rest)}, {"sigma", prior_json(priors.sigma)},
                 {"c", prior_json(priors.c)},           {"a", prior_json(priors.a)},
                 {"ell", prior_json(priors.ell)},       {"lambda", prior_json(priors.lambda)}};
  j["sampler"] = {{"chains", sampler.n_chains},
                  {"warmup", sampler.n_warmup},
                  {"draws", sampler.n_draws},
                  {"target_accept", sampler.target_accept},
                  {"max_tree_depth", sampler.max_tree_depth},
                  {"parallel_chains", sampler.parallel_chains}};
  j["split"] = {{"test_days", split.test_days}, {"val_days", split.val_days}, {"horizon", split.horizon}};
  j["grid"] = {{"enabled", run_grid_search}, {"window", window_grid}, {"length_scale_mean", length_scale_grid}};
  j["evaluation"] = {{"group_size", group_size},
                     {"baseline_window", baseline_window},
                     {"prospective_holdout", prospective_holdout}};
  j["output_dir"] = output_dir;
  j["seed"] = seed;
  j["screen_anomalies"] = screen_anomalies;
  return j.dump(2) + "\n";
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(splitmix64(base) ^ a) ^ b) ^ c);
}

ModelSpec make_spec(const ModelChoice& model, const PriorConfig& priors, int sites, int train_length) {
  ModelSpec spec;
  spec.latent = model.latent;
  spec.window = model.window;
  spec.likelihood = model.likelihood;
  spec.sites = sites;
  spec.train_length = train_length;
  spec.priors = priors;
  spec.priors.ell.mean = model.length_scale_mean;
  spec.daily_dispersion_floor = model.daily_dispersion_floor;
  spec.noncentered = model.noncentered;
  spec.validate();
  return spec;
}

SiteCounts to_site_counts(const std::vector<CountSeries>& series) {
  SiteCounts out;
  for (const auto& s : series) out.push_back(s.counts);
  return out;
}

// ---- fitting ----------------------------------------------------------------

FitResult fit_from_draws(const ModelSpec& spec, const std::vector<std::string>& names,
                         const std::vector<Eigen::MatrixXd>& constrained) {
  if (names != parameter_names(spec)) throw std::invalid_argument("draw columns do not match the model's parameters");
  FitResult r;
  r.spec = spec;
  r.names = names;
  r.constrained = constrained;
  for (std::size_t c = 0; c < constrained.size(); ++c) {
    for (Eigen::Index i = 0; i < constrained[c].rows(); ++i) {
      PosteriorSample s = from_constrained_values(spec, constrained[c].row(i).transpose());
      s.chain = static_cast<int>(c);
      s.draw = static_cast<int>(i);
      r.samples.push_back(std::move(s));
    }
  }
  r.convergence = summarize_convergence(constrained);
  return r;
}

FitResult fit(const ModelSpec& spec, const SiteCounts& data, const SamplerConfig& cfg) {
  const PosteriorModel model(spec, data);
  const bool nc = spec.noncentered;
  const LogDensityGradient target = [&model, nc](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    return nc ? model.noncentered_log_density_gradient(q, g) : model.log_density_gradient(q, g);
  };
  const Eigen::VectorXd start = nc ? model.noncentered_initial_point() : model.initial_point();
  std::vector<ChainResult> chains = nuts_sample(target, start, cfg);
  std::vector<Eigen::MatrixXd> constrained;
  for (auto& c : chains) {
    Eigen::MatrixXd m(c.draws.rows(), c.draws.cols());
    for (Eigen::Index i = 0; i < c.draws.rows(); ++i) {
      if (nc) c.draws.row(i) = model.from_noncentered(c.draws.row(i).transpose()).transpose();
      m.row(i) = constrained_values(spec, unpack(spec, c.draws.row(i).transpose())).transpose();
    }
    constrained.push_back(std::move(m));
  }
  FitResult r = fit_from_draws(spec, parameter_names(spec), constrained);
  for (const auto& c : chains) r.convergence.total_divergences += c.divergences;
  r.chains = std::move(chains);
  return r;
}

// ---- grid search ------------------------------------------------------------

std::size_t select_grid_point(const std::vector<GridPoint>& points) {
  if (points.empty()) throw std::invalid_argument("empty grid");
  const bool all_flagged = std::all_of(points.begin(), points.end(), [](const GridPoint& p) { return p.flagged; });
  std::size_t best = points.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].flagged && !all_flagged) continue;
    if (best == points.size() || points[i].score.mean > points[best].score.mean) best = i;
  }
  return best;
}

GridSearchResult grid_search(const ExperimentConfig& cfg, const CountSeries& series, LatentKind latent,
                             std::uint64_t seed) {
  const SeriesSplit parts = split(series, cfg.split);
  GridSearchResult result;
  result.latent = latent;
  result.site = series.site;
  std::vector<double> values;
  if (latent == LatentKind::Gar) {
    for (int w : cfg.window_grid) values.push_back(w);
  } else {
    values = cfg.length_scale_grid;
  }
  // Ascending order makes first-wins tie-breaking prefer the simpler model.
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  for (std::size_t k = 0; k < values.size(); ++k) {
    ModelChoice m = cfg.model;
    m.latent = latent;
    m.multi_site = false;
    if (latent == LatentKind::Gar) {
      m.window = static_cast<int>(values[k]);
    } else {
      m.length_scale_mean = values[k];
    }
    const ModelSpec spec = make_spec(m, cfg.priors, 1, static_cast<int>(parts.train.size()));
    const FitResult f = fit(spec, {parts.train.counts}, with_seed(cfg.sampler, derive_seed(seed, k, 1)));
    GridPoint p;
    p.value = values[k];
    p.score = score_fit(f, parts.val.counts, 0, cfg.group_size, derive_seed(seed, k, 2));
    p.max_rhat = f.convergence.max_rhat;
    p.fraction_rhat_above = f.convergence.fraction_rhat_above(1.1);
    p.flagged = p.fraction_rhat_above > 0.10;
    result.points.push_back(std::move(p));
  }
  result.best = select_grid_point(result.points);
  return result;
}

// ---- retrospective ------------------------------------------------------------

RetrospectiveReport run_retrospective(const ExperimentConfig& cfg, const std::vector<CountSeries>& sites) {
  if (sites.empty()) throw std::invalid_argument("retrospective run needs at least one site");
  RetrospectiveReport report;
  report.anomalies = screen_all(cfg, sites);
  std::vector<SeriesSplit> parts;
  for (const auto& s : sites) parts.push_back(split(s, cfg.split));

  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (LatentKind latent : {LatentKind::Ggp, LatentKind::Gar}) {
      const std::uint64_t tag = latent == LatentKind::Gar ? 1 : 2;
      ModelChoice m = cfg.model;
      m.latent = latent;
      m.multi_site = false;
      double value = latent == LatentKind::Gar ? m.window : m.length_scale_mean;
      if (cfg.run_grid_search) {
        GridSearchResult g = grid_search(cfg, sites[i], latent, derive_seed(cfg.seed, i, tag, 1));
        value = g.best_value();
        report.grids.push_back(std::move(g));
      }
      if (latent == LatentKind::Gar) {
        m.window = static_cast<int>(value);
      } else {
        m.length_scale_mean = value;
      }
      const CountSeries train_val = parts[i].train_val();
      const ModelSpec spec = make_spec(m, cfg.priors, 1, static_cast<int>(train_val.size()));
      const FitResult f = fit(spec, {train_val.counts}, with_seed(cfg.sampler, derive_seed(cfg.seed, i, tag, 2)));
      ModelScore row;
      row.site = sites[i].site;
      row.model = latent == LatentKind::Gar ? "GAR" : "GGP";
      row.hyperparameter = value;
      row.score = score_fit(f, parts[i].test.counts, 0, cfg.group_size, derive_seed(cfg.seed, i, tag, 3));
      row.max_rhat = f.convergence.max_rhat;
      row.min_ess = f.convergence.min_ess;
      row.divergences = f.convergence.total_divergences;
      report.scores.push_back(std::move(row));
    }
  }

  ModelChoice multi = cfg.model;
  multi.latent = LatentKind::Gar;
  multi.window = 1;
  multi.multi_site = true;
  std::vector<CountSeries> train_val;
  for (const auto& p : parts) train_val.push_back(p.train_val());
  const ModelSpec spec = make_spec(multi, cfg.priors, static_cast<int>(sites.size()), static_cast<int>(train_val[0].size()));
  const FitResult f = fit(spec, to_site_counts(train_val), with_seed(cfg.sampler, derive_seed(cfg.seed, 1000, 3, 2)));
  const std::size_t horizon = parts[0].test.size();
  const ForecastResult fc = draw_forecasts(f.samples, spec, static_cast<int>(horizon), derive_seed(cfg.seed, 1000, 3, 3));
  for (std::size_t i = 0; i < sites.size(); ++i) {
    ModelScore row;
    row.site = sites[i].site;
    row.model = "multi-site GAR";
    row.hyperparameter = 1;
    row.score = heldout_loglik(fc, static_cast<int>(i), spec.likelihood, parts[i].test.counts, cfg.group_size);
    row.max_rhat = f.convergence.max_rhat;
    row.min_ess = f.convergence.min_ess;
    row.divergences = f.convergence.total_divergences;
    report.scores.push_back(std::move(row));
  }
  std::stable_sort(report.scores.begin(), report.scores.end(),
                   [&](const ModelScore& a, const ModelScore& b) {
                     auto pos = [&](const std::string& s) {
                       for (std::size_t i = 0; i < sites.size(); ++i) {
                         if (sites[i].site == s) return i;
                       }
                       return sites.size();
                     };
                     return pos(a.site) < pos(b.site);
                   });
  return report;
}

std::string RetrospectiveReport::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-16s %8s %22s %10s %10s %6s\n", "site", "model", "hyper",
                "score (mean +- SEM)", "max R-hat", "min ESS", "div");
  out << line;
  for (const auto& r : scores) {
    const std::string cell = fixed(r.score.mean, 3) + " +- " + fixed(r.score.sem, 3);
    std::snprintf(line, sizeof line, "%-24s %-16s %8s %22s %10s %10s %6d\n", r.site.c_str(), r.model.c_str(),
                  fixed(r.hyperparameter, 0).c_str(), cell.c_str(), fixed(r.max_rhat, 3).c_str(),
                  fixed(r.min_ess, 0).c_str(), r.divergences);
    out << line;
    for (std::size_t c = 0; c < r.score.chain_ids.size(); ++c) {
      const std::string chain_cell = fixed(r.score.chain_means[c], 3) + " +- " + fixed(r.score.chain_sems[c], 3);
      const std::string label = "  chain " + std::to_string(r.score.chain_ids[c]);
      std::snprintf(line, sizeof line, "%-24s %-16s %8s %22s\n", "", label.c_str(), "", chain_cell.c_str());
      out << line;
    }
  }
  return out.str();
}

std::string RetrospectiveReport::to_json() const {
  Json j;
  Json grid_rows = Json::array();
  for (const auto& g : grids) {
    Json gj;
    gj["site"] = g.site;
    gj["latent"] = latent_name(g.latent);
    gj["best"] = g.best_value();
    Json pts = Json::array();
    for (const auto& p : g.points) {
      pts.push_back({{"value", p.value},
                     {"score_mean", p.score.mean},
                     {"score_sem", p.score.sem},
                     {"max_rhat", p.max_rhat},
                     {"fraction_rhat_above_1.1", p.fraction_rhat_above},
                     {"flagged", p.flagged}});
    }
    gj["points"] = pts;
    grid_rows.push_back(gj);
  }
  j["grid_search"] = grid_rows;
  Json rows = Json::array();
  for (const auto& r : scores) {
    rows.push_back({{"site", r.site},
                    {"model", r.model},
                    {"hyperparameter", r.hyperparameter},
                    {"score", score_json(r.score)},
                    {"max_rhat", r.max_rhat},
                    {"min_ess", r.min_ess},
                    {"divergences", r.divergences}});
  }
  j["scores"] = rows;
  j["anomalies"] = anomaly_json(anomalies);
  return j.dump(2) + "\n";
}

// ---- prospective ------------------------------------------------------------

ProspectiveReport run_prospective(const ExperimentConfig& cfg, const std::vector<CountSeries>& sites,
                                  const std::optional<CountSeries>& state,
                                  const std::optional<ExternalStateForecast>& external) {
  if (sites.empty()) throw std::invalid_argument("prospective run needs at least one site");
  if (external && !state) throw std::invalid_argument("the external-forecast baseline needs a state series for the site fractions");
  ProspectiveReport report;
  report.anomalies = screen_all(cfg, sites);
  const int holdout = cfg.prospective_holdout;
  const int horizon = holdout > 0 ? holdout : cfg.split.horizon;

  std::vector<CountSeries> train;
  std::vector<std::vector<double>> actual;
  for (const auto& s : sites) {
    if (s.size() <= static_cast<std::size_t>(holdout)) {
      throw std::invalid_argument("site '" + s.site + "' is not longer than the holdout");
    }
    const std::size_t n = s.size() - static_cast<std::size_t>(holdout);
    train.push_back(s.slice(0, n));
    actual.push_back(s.slice(n, static_cast<std::size_t>(holdout)).as_double());
  }
  const Date first_day = train[0].end() + std::chrono::days(1);
  auto finish = [&](MethodForecast mf, std::size_t i) {
    if (holdout > 0) {
      std::vector<double> mean;
      for (const auto& d : mf.days) mean.push_back(d.mean);
      mf.mae = mae(mean, actual[i]);
    }
    report.forecasts.push_back(std::move(mf));
  };

  ModelChoice single = cfg.model;
  single.latent = LatentKind::Gar;
  single.multi_site = false;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const ModelSpec spec = make_spec(single, cfg.priors, 1, static_cast<int>(train[i].size()));
    const FitResult f = fit(spec, {train[i].counts}, with_seed(cfg.sampler, derive_seed(cfg.seed, i, 11)));
    const ForecastResult fc = draw_forecasts(f.samples, spec, horizon, derive_seed(cfg.seed, i, 12));
    finish({sites[i].site, "GAR(W=" + std::to_string(single.window) + ")", first_day, fc.sites[0].days, {}, false,
            f.convergence},
           i);
  }
  if (sites.size() > 1) {
    ModelChoice multi = single;
    multi.window = 1;
    multi.multi_site = true;
    const ModelSpec spec = make_spec(multi, cfg.priors, static_cast<int>(sites.size()), static_cast<int>(train[0].size()));
    const FitResult f = fit(spec, to_site_counts(train), with_seed(cfg.sampler, derive_seed(cfg.seed, 1000, 11)));
    const ForecastResult fc = draw_forecasts(f.samples, spec, horizon, derive_seed(cfg.seed, 1000, 12));
    for (std::size_t i = 0; i < sites.size(); ++i) {
      finish({sites[i].site, "multi-site GAR(W=1)", first_day, fc.sites[i].days, {}, false, f.convergence}, i);
    }
  }

  if (state) {
    const Date to = train[0].end();
    const CountSeries recent = state->between(to - std::chrono::days(cfg.baseline_window - 1), to);
    std::vector<IntervalForecast> state_ols = ols_trend_forecast(recent.as_double(), horizon).days;
    // Counts cannot go negative; the bound product also assumes nonnegative bounds.
    for (auto& d : state_ols) {
      d.mean = std::max(d.mean, 0.0);
      d.lower = std::max(d.lower, 0.0);
      d.upper = std::max(d.upper, 0.0);
    }
    std::vector<IntervalForecast> ext;
    if (external) ext = external->window(first_day, horizon);
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const FractionForecast frac = fraction_forecast(train[i], *state, horizon, cfg.baseline_window);
      auto as_summary = [](const std::vector<IntervalForecast>& v) {
        std::vector<DaySummary> out;
        for (const auto& d : v) out.push_back({d.mean, d.lower, d.mean, d.upper});
        return out;
      };
      finish({sites[i].site, "rescaled OLS", first_day, as_summary(rescale(frac.days, state_ols)), {}, frac.clamped}, i);
      if (external) {
        finish({sites[i].site, "rescaled external", first_day, as_summary(rescale(frac.days, ext)), {}, frac.clamped}, i);
      }
    }
  }
  return report;
}

std::string ProspectiveReport::to_json() const {
  Json j;
  Json rows = Json::array();
  for (const auto& f : forecasts) {
    Json r;
    r["site"] = f.site;
    r["method"] = f.method;
    r["first_day"] = format_date(f.first_day);
    r["mae"] = f.mae ? Json(*f.mae) : Json(nullptr);
    r["fraction_clamped"] = f.clamped;
    if (f.convergence) {
      r["max_rhat"] = f.convergence->max_rhat;
      r["min_ess"] = f.convergence->min_ess;
      r["divergences"] = f.convergence->total_divergences;
    }
    Json days = Json::array();
    for (std::size_t t = 0; t < f.days.size(); ++t) {
      const DaySummary& d = f.days[t];
      days.push_back({{"date", format_date(f.first_day + std::chrono::days(static_cast<int>(t)))},
                      {"mean", d.mean},
                      {"p2.5", d.p025},
                      {"p50", d.median},
                      {"p97.5", d.p975}});
    }
    r["days"] = days;
    rows.push_back(r);
  }
  j["forecasts"] = rows;
  j["anomalies"] = anomaly_json(anomalies);
  return j.dump(2) + "\n";
}

// ---- simulation -------------------------------------------------------------

SimulatedData simulate(const SimulationSpec& spec) {
  if (spec.length < 1) throw std::invalid_argument("simulation length must be at least 1");
  if (spec.lambda.empty()) throw std::invalid_argument("simulation needs one dispersion value per site");
  if (spec.latent == LatentKind::Gar) {
    // sigma = 0 is allowed here and gives the deterministic recursion.
    if (spec.gar.beta.size() < 1 || !spec.gar.beta.allFinite()) throw std::invalid_argument("GAR coefficients must be finite");
    if (!(spec.gar.sigma >= 0.0) || !std::isfinite(spec.gar.sigma)) throw std::invalid_argument("GAR sigma must be non-negative");
  } else {
    spec.ggp.validate();
  }
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed & 0xffffffffu), static_cast<std::uint32_t>(spec.seed >> 32),
                    0x27d4eb2fu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimulatedData out;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (spec.latent == LatentKind::Ggp) {
    const Eigen::VectorXd days = day_indices(spec.length);
    Eigen::MatrixXd k = se_kernel_matrix(days, days, spec.ggp);
    k.diagonal().array() += default_jitter(spec.ggp);
    llt.compute(k);
    if (llt.info() != Eigen::Success) throw NumericalError("GP prior covariance is not positive definite");
  }
  for (double lambda_h : spec.lambda) {
    const double lambda = spec.likelihood == LikelihoodKind::GenPoisson ? lambda_h : 0.0;
    if (!(lambda >= -1.0 && lambda <= 1.0)) throw std::invalid_argument("dispersion must lie in [-1, 1]");
    LatentSeq f(spec.length);
    if (spec.latent == LatentKind::Gar) {
      f[0] = spec.gar.beta[0] + spec.gar.sigma * normal(rng);
      for (int t = 1; t < spec.length; ++t) {
        f[t] = gar_forecast_step(std::span<const double>(f.data(), static_cast<std::size_t>(t)), spec.gar, normal(rng));
      }
    } else {
      Eigen::VectorXd z(spec.length);
      for (int t = 0; t < spec.length; ++t) z[t] = normal(rng);
      f = Eigen::VectorXd::Constant(spec.length, spec.ggp.c) + llt.matrixL() * z;
    }
    std::vector<Count> y;
    for (int t = 0; t < spec.length; ++t) {
      const InversionDraw d = simulate_count(f[t], lambda, unif(rng));
      if (d.saturated) ++out.saturated_draws;
      y.push_back(d.value);
    }
    out.f.push_back(std::move(f));
    out.y.push_back(std::move(y));
  }
  return out;
}

}  // namespace census
