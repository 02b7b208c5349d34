#include <catch_amalgamated.hpp>

#include <cmath>

#include "census/diagnostics.hpp"
#include "census/nuts.hpp"

using namespace census;
using Catch::Matchers::WithinAbs;

namespace {

LogDensityGradient gaussian(const Eigen::MatrixXd& precision) {
  return [precision](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    grad = -precision * q;
    return -0.5 * q.dot(precision * q);
  };
}

LogDensityGradient std_normal(int dim) { return gaussian(Eigen::MatrixXd::Identity(dim, dim)); }

PhasePoint start(const LogDensityGradient& target, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  PhasePoint z;
  z.q = q;
  z.p = p;
  z.log_density = target(q, z.grad);
  return z;
}

Eigen::VectorXd pooled_column(const std::vector<ChainResult>& chains, Eigen::Index col) {
  Eigen::Index n = 0;
  for (const auto& c : chains) n += c.draws.rows();
  Eigen::VectorXd out(n);
  Eigen::Index off = 0;
  for (const auto& c : chains) {
    out.segment(off, c.draws.rows()) = c.draws.col(col);
    off += c.draws.rows();
  }
  return out;
}

double variance(const Eigen::VectorXd& x) {
  return (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

TEST_CASE("leapfrog is reversible", "[nuts]") {
  Eigen::MatrixXd prec(3, 3);
  prec << 2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5;
  const auto target = gaussian(prec);
  const Eigen::VectorXd inv_mass = Eigen::Vector3d(1.0, 0.5, 2.0);
  const PhasePoint z0 = start(target, Eigen::Vector3d(0.3, -1.2, 0.8), Eigen::Vector3d(1.0, 0.4, -0.7));
  PhasePoint z = z0;
  for (int i = 0; i < 50; ++i) leapfrog(z, inv_mass, 0.1, target);
  z.p = -z.p;
  for (int i = 0; i < 50; ++i) leapfrog(z, inv_mass, 0.1, target);
  CHECK((z.q - z0.q).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((z.p + z0.p).cwiseAbs().maxCoeff() < 1e-10);

  // A negative step integrates backwards.
  PhasePoint w = z0;
  leapfrog(w, inv_mass, 0.2, target);
  leapfrog(w, inv_mass, -0.2, target);
  CHECK((w.q - z0.q).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("leapfrog energy error stays bounded on a Gaussian", "[nuts][property]") {
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(4, 4);
  prec.diagonal() << 1.0, 4.0, 0.25, 9.0;
  const auto target = gaussian(prec);
  const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(4);
  PhasePoint z = start(target, Eigen::Vector4d(1.0, -0.5, 2.0, 0.1), Eigen::Vector4d(0.5, 0.5, -1.0, 1.0));
  const double h0 = hamiltonian(z, inv_mass);
  double worst = 0.0;
  double first_half = 0.0, second_half = 0.0;
  // Stability needs eps * max frequency (3) < 2.
  for (int i = 0; i < 4000; ++i) {
    leapfrog(z, inv_mass, 0.1, target);
    const double err = std::fabs(hamiltonian(z, inv_mass) - h0);
    worst = std::max(worst, err);
    (i < 2000 ? first_half : second_half) += err;
  }
  CHECK(worst < 0.1);
  // No drift: the late error is not systematically larger.
  CHECK(second_half < 1.2 * first_half);
}

TEST_CASE("NUTS on a 1-D standard normal", "[nuts]") {
  SamplerConfig cfg;
  cfg.seed = 11;
  const auto chains = nuts_sample(std_normal(1), Eigen::VectorXd::Constant(1, 2.0), cfg);
  REQUIRE(chains.size() == 2);
  const Eigen::VectorXd x = pooled_column(chains, 0);
  CHECK(x.size() == 10000);
  const double n_eff = ess(column_draws(chains, 0)).value;
  CHECK(std::fabs(x.mean()) < 3.0 / std::sqrt(n_eff));
  CHECK(std::fabs(variance(x) - 1.0) < 0.1);
  for (const auto& c : chains) {
    CHECK(c.divergences == 0);
    CHECK_FALSE(c.divergence_warning);
    CHECK(c.mean_accept_stat() > 0.6);
    CHECK(c.step_size > 0.0);
    CHECK(c.draws.allFinite());
  }
}

TEST_CASE("NUTS on a correlated 2-D Gaussian", "[nuts]") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.9, 0.9, 1.0;
  SamplerConfig cfg;
  cfg.seed = 5;
  const auto chains = nuts_sample(gaussian(cov.inverse()), Eigen::Vector2d(0.5, -0.5), cfg);
  const Eigen::VectorXd x = pooled_column(chains, 0);
  const Eigen::VectorXd y = pooled_column(chains, 1);
  const double cxy = ((x.array() - x.mean()) * (y.array() - y.mean())).sum() / static_cast<double>(x.size() - 1);
  CHECK_THAT(cxy / std::sqrt(variance(x) * variance(y)), WithinAbs(0.9, 0.05));
}

TEST_CASE("NUTS respects a hard support bound", "[nuts]") {
  // Half-normal on x > 0 via -inf outside the support.
  const LogDensityGradient half = [](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    grad = -q;
    if (q[0] <= 0.0) return -std::numeric_limits<double>::infinity();
    return -0.5 * q[0] * q[0];
  };
  SamplerConfig cfg;
  cfg.n_draws = 2000;
  cfg.seed = 9;
  const auto chains = nuts_sample(half, Eigen::VectorXd::Constant(1, 1.0), cfg);
  for (const auto& c : chains) CHECK(c.draws.col(0).minCoeff() > 0.0);
  const Eigen::VectorXd x = pooled_column(chains, 0);
  CHECK_THAT(x.mean(), WithinAbs(std::sqrt(2.0 / std::numbers::pi), 0.05));
}

TEST_CASE("NUTS is deterministic and chain-wise reproducible", "[nuts][property]") {
  SamplerConfig cfg;
  cfg.n_warmup = 200;
  cfg.n_draws = 300;
  cfg.seed = 77;
  const auto target = std_normal(3);
  const Eigen::VectorXd init = Eigen::Vector3d(0.1, 0.2, 0.3);
  const auto a = nuts_sample(target, init, cfg);
  const auto b = nuts_sample(target, init, cfg);
  for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c].draws == b[c].draws);
  CHECK(a[0].draws != a[1].draws);

  // Chain 1 run on its own matches chain 1 of the batch.
  const ChainResult solo = nuts_chain(target, init, cfg, 1);
  CHECK(solo.draws == a[1].draws);

  cfg.parallel_chains = true;
  const auto par = nuts_sample(target, init, cfg);
  for (std::size_t c = 0; c < a.size(); ++c) CHECK(par[c].draws == a[c].draws);

  cfg.seed = 78;
  const auto other = nuts_sample(target, init, cfg);
  CHECK(other[0].draws != a[0].draws);
}

TEST_CASE("NUTS input validation", "[nuts]") {
  SamplerConfig cfg;
  const LogDensityGradient bad = [](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    grad = Eigen::VectorXd::Zero(q.size());
    return -std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS(nuts_sample(bad, Eigen::VectorXd::Zero(1), cfg));
  cfg.target_accept = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg.target_accept = 0.8;
  cfg.n_draws = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("dual averaging converges to the target acceptance", "[nuts]") {
  // Acceptance falls with step size as exp(-eps); the fixed point is eps = -log(0.8).
  DualAveraging da(0.8);
  da.restart(1.0);
  double eps = 1.0;
  for (int i = 0; i < 5000; ++i) eps = da.update(std::exp(-eps));
  CHECK_THAT(da.final_step(), WithinAbs(-std::log(0.8), 0.01));
}

TEST_CASE("windowed adaptation schedule", "[nuts]") {
  WindowedAdaptation w(1000);
  CHECK(w.init_buffer() == 75);
  CHECK(w.term_buffer() == 50);
  CHECK_FALSE(w.in_slow_window(74));
  CHECK(w.in_slow_window(75));
  CHECK_FALSE(w.in_slow_window(950));
  int ends = 0;
  for (int i = 0; i < 1000; ++i) {
    if (w.window_ends(i)) {
      ++ends;
      w.next_window();
    }
  }
  // 25, 50, 100, 200, then the last window absorbs the rest up to 950.
  CHECK(ends == 5);
}
