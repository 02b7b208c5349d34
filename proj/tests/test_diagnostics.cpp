#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "census/diagnostics.hpp"

using namespace census;

namespace {

ChainDraws iid_chains(std::uint64_t seed, int chains, int n, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ChainDraws out(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    for (int i = 0; i < n; ++i) out[c].push_back(z(rng) + shift * c);
  }
  return out;
}

ChainDraws ar1_chains(std::uint64_t seed, int chains, int n, double phi) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ChainDraws out(static_cast<std::size_t>(chains));
  const double innov = std::sqrt(1.0 - phi * phi);
  for (auto& chain : out) {
    double x = z(rng);
    for (int i = 0; i < n; ++i) {
      x = phi * x + innov * z(rng);
      chain.push_back(x);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("rhat", "[diagnostics]") {
  SECTION("i.i.d. chains") {
    const DiagnosticValue r = rhat(iid_chains(1, 2, 5000));
    CHECK(r.value >= 1.0 - 1e-3);
    CHECK(r.value <= 1.01);
    CHECK_FALSE(r.degenerate);
  }
  SECTION("two identical chains") {
    ChainDraws same = iid_chains(2, 1, 5000);
    same.push_back(same[0]);
    const double r = rhat(same).value;
    CHECK(r >= 1.0 - 1e-3);
    CHECK(r <= 1.01);
  }
  SECTION("separated chain means") {
    CHECK(rhat(iid_chains(3, 2, 5000, 10.0)).value > 3.0);
  }
  SECTION("constant chains") {
    const DiagnosticValue r = rhat(ChainDraws{std::vector<double>(100, 2.5), std::vector<double>(100, 2.5)});
    CHECK(r.value == 1.0);
    CHECK(r.degenerate);
  }
  SECTION("a trend inside one chain is caught by splitting") {
    ChainDraws trend(1);
    for (int i = 0; i < 1000; ++i) trend[0].push_back(0.01 * i);
    CHECK(rhat(trend).value > 1.5);
  }
  SECTION("too few draws") {
    CHECK_THROWS(rhat(ChainDraws{{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}}));
  }
}

TEST_CASE("ess", "[diagnostics]") {
  SECTION("i.i.d. draws") {
    const double e = ess(iid_chains(4, 2, 5000)).value;
    CHECK(std::fabs(e - 10000.0) < 0.2 * 10000.0);
  }
  SECTION("AR(1) with coefficient 0.9") {
    const double expected = 20000.0 * (1.0 - 0.9) / (1.0 + 0.9);
    const double e = ess(ar1_chains(5, 2, 10000, 0.9)).value;
    CHECK(std::fabs(e - expected) < 0.3 * expected);
  }
  SECTION("constant chains") {
    const DiagnosticValue e = ess(ChainDraws{std::vector<double>(100, 1.0), std::vector<double>(100, 1.0)});
    CHECK(e.degenerate);
    CHECK(e.value == 0.0);
  }
}

TEST_CASE("summarize_convergence", "[diagnostics]") {
  std::vector<Eigen::MatrixXd> chains(2, Eigen::MatrixXd(2000, 3));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 2000; ++i) {
      chains[c](i, 0) = z(rng);
      chains[c](i, 1) = z(rng) + 5.0 * c;  // unmixed
      chains[c](i, 2) = 4.0;               // constant
    }
  }
  const ConvergenceSummary s = summarize_convergence(chains);
  CHECK(s.rhat.size() == 3);
  CHECK(s.max_rhat == s.rhat[1]);
  CHECK(s.rhat[1] > 2.0);
  CHECK(s.degenerate_params == 1);
  CHECK(s.fraction_rhat_above(1.1) == Catch::Approx(1.0 / 3.0));
  CHECK(s.total_divergences == 0);
}
