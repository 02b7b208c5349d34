#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "census/count_likelihoods.hpp"
#include "test_support.hpp"

using namespace census;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double summed_mass(double theta, double lambda, Count upto) {
  double s = 0.0;
  for (Count y = 0; y <= upto; ++y) s += std::exp(genpoisson_logpmf(y, {theta, lambda}));
  return s;
}

}  // namespace

TEST_CASE("poisson_logpmf worked values", "[likelihood]") {
  CHECK_THAT(poisson_logpmf(0, 1.0), WithinAbs(-1.0, 1e-15));
  CHECK_THAT(poisson_logpmf(2, 3.0), WithinAbs(std::log(4.5) - 3.0, 1e-14));
  CHECK_THAT(poisson_logpmf(2, 3.0), WithinAbs(-1.495923, 1e-6));

  using Big = boost::multiprecision::cpp_bin_float_50;
  const Big theta = 10;
  const Big oracle = 10 * boost::multiprecision::log(theta) - theta - boost::math::lgamma(Big(11));
  CHECK_THAT(poisson_logpmf(10, 10.0), WithinAbs(oracle.convert_to<double>(), 1e-12));
}

TEST_CASE("poisson_logpmf rejects a non-positive rate", "[likelihood]") {
  CHECK_THROWS_AS(poisson_logpmf(1, 0.0), std::domain_error);
  CHECK_THROWS_AS(poisson_logpmf(1, -2.0), std::domain_error);
}

TEST_CASE("genpoisson_logpmf worked values", "[likelihood]") {
  CHECK_THAT(genpoisson_logpmf(0, {1.0, 0.0}), WithinAbs(-1.0, 1e-15));
  const double hand = -std::log(6.0) + std::log(2.0) + 2.0 * std::log(2.3) - 2.3;
  CHECK_THAT(genpoisson_logpmf(3, {2.0, 0.1}), WithinAbs(hand, 1e-13));
  CHECK_THAT(genpoisson_logpmf(3, {2.0, 0.1}), WithinAbs(-1.732794042797902, 1e-12));
  CHECK(genpoisson_logpmf(10, {2.0, -0.3}) == -kInf);
}

TEST_CASE("genpoisson_logpmf rejects infeasible parameters", "[likelihood]") {
  CHECK_THROWS_AS(genpoisson_logpmf(1, {0.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(genpoisson_logpmf(1, {2.0, 1.5}), std::domain_error);
  CHECK_THROWS_AS(genpoisson_logpmf(1, {2.0, -0.6}), std::domain_error);  // below -theta/4
  CHECK_THROWS_AS(genpoisson_logpmf(1, {8.0, -1.2}), std::domain_error);
  CHECK_NOTHROW(genpoisson_logpmf(1, {2.0, -0.5}));
}

TEST_CASE("genpoisson_logpmf stays finite past the factorial overflow", "[likelihood]") {
  const double v = genpoisson_logpmf(500, {400.0, 0.2});
  CHECK(std::isfinite(v));
  CHECK(v < 0.0);
}

TEST_CASE("generalized Poisson reduces to Poisson at lambda = 0", "[likelihood][property]") {
  for (double theta : {0.5, 1.0, 5.0, 20.0}) {
    for (Count y = 0; y <= 200; ++y) {
      CHECK_THAT(genpoisson_logpmf(y, {theta, 0.0}), WithinAbs(poisson_logpmf(y, theta), 1e-12));
    }
  }
}

TEST_CASE("generalized Poisson mass sums to one for lambda >= 0", "[likelihood][property]") {
  for (double lambda : {0.0, 0.2, 0.5}) {
    for (double theta : {0.5, 3.0, 20.0}) {
      const Count upto = genpoisson_support_cap({theta, lambda});
      CHECK_THAT(summed_mass(theta, lambda, upto), WithinAbs(1.0, 1e-6));
    }
  }
}

TEST_CASE("truncated support loses under 1% of mass in the operating regime", "[likelihood][property]") {
  for (double theta : {5.0, 10.0, 50.0}) {
    for (double lambda : {-0.5, -0.3, -0.1}) {
      const double mass = summed_mass(theta, lambda, 2000);
      // The unrenormalized truncated mass can overshoot 1 slightly: at
      // theta=5, lambda=-0.5 it is 1 + 3.145e-10 (mpmath, 40 digits).
      CHECK(mass <= 1.0 + 1e-9);
      CHECK(mass >= 0.99);
    }
  }
}

TEST_CASE("genpoisson_grad_logpmf matches finite differences", "[likelihood][gradient]") {
  const auto check = [](Count y, double theta, double lambda) {
    const GenPoissonGradient g = genpoisson_grad_logpmf(y, {theta, lambda});
    const double d_theta =
        testing::central_difference([&](double t) { return genpoisson_logpmf(y, {t, lambda}); }, theta);
    const double d_lambda =
        testing::central_difference([&](double l) { return genpoisson_logpmf(y, {theta, l}); }, lambda);
    CHECK_THAT(g.d_theta, WithinAbs(d_theta, 1e-6));
    CHECK_THAT(g.d_lambda, WithinAbs(d_lambda, 1e-6));
  };
  const GenPoissonGradient g0 = genpoisson_grad_logpmf(0, {1.0, 0.0});
  CHECK_THAT(g0.d_theta, WithinAbs(-1.0, 1e-15));
  CHECK_THAT(g0.d_lambda, WithinAbs(0.0, 1e-15));
  check(3, 2.0, 0.1);
  check(5, 4.0, -0.2);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> theta_dist(0.5, 30.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> y_dist(0, 40);
  for (int i = 0; i < 60; ++i) {
    const double theta = theta_dist(rng);
    const double lo = std::max(-1.0, -theta / 4.0) + 1e-3;
    const double lambda = lo + (0.9 - lo) * unit(rng);
    Count y = y_dist(rng);
    // Keep the point away from the truncation edge.
    while (y > 0 && theta + lambda * static_cast<double>(y) < 0.5) --y;
    check(y, theta, lambda);
  }
}

TEST_CASE("genpoisson_grad_logpmf refuses a zero-mass point", "[likelihood][gradient]") {
  CHECK_THROWS_AS(genpoisson_grad_logpmf(10, {2.0, -0.3}), std::domain_error);
}

TEST_CASE("genpoisson_mean_var", "[likelihood]") {
  Moments m = genpoisson_mean_var({2.0, 0.0});
  CHECK_THAT(m.mean, WithinAbs(2.0, 1e-15));
  CHECK_THAT(m.variance, WithinAbs(2.0, 1e-15));
  m = genpoisson_mean_var({2.0, 0.5});
  CHECK_THAT(m.mean, WithinAbs(4.0, 1e-15));
  CHECK_THAT(m.variance, WithinAbs(16.0, 1e-14));
  m = genpoisson_mean_var({3.0, -0.5});
  CHECK_THAT(m.mean, WithinAbs(2.0, 1e-15));
  CHECK_THAT(m.variance, WithinAbs(3.0 / 3.375, 1e-15));
  CHECK_THROWS_AS(genpoisson_mean_var({2.0, 1.0}), std::domain_error);
}

TEST_CASE("genpoisson_sample inverts the CDF", "[likelihood][sampler]") {
  CHECK(genpoisson_sample({1.0, 0.0}, 0.3) == 0);
  CHECK(genpoisson_sample({1.0, 0.0}, 0.5) == 1);
  CHECK(genpoisson_sample({1.0, 0.0}, 0.0) == 0);
  CHECK_THROWS_AS(genpoisson_sample({1.0, 0.0}, 1.0), std::domain_error);
}

TEST_CASE("genpoisson_sample Monte Carlo mean", "[likelihood][sampler]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(genpoisson_sample({2.0, 0.5}, unif(rng)));
  const double se = std::sqrt(16.0 / n);
  CHECK(std::fabs(sum / n - 4.0) < 3.0 * se);
}

TEST_CASE("inversion sampler empirical PMF matches the mass function", "[likelihood][sampler][property]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = 100000;
  for (const GenPoissonParams p : {GenPoissonParams{3.0, 0.0}, GenPoissonParams{6.0, -0.4}, GenPoissonParams{2.0, 0.3}}) {
    std::vector<int> hist(200, 0);
    for (int i = 0; i < n; ++i) {
      const Count y = genpoisson_sample(p, unif(rng));
      if (y < 200) ++hist[static_cast<std::size_t>(y)];
    }
    for (Count y = 0; y < 40; ++y) {
      const double prob = std::exp(genpoisson_logpmf(y, p));
      const double se = std::sqrt(prob * (1.0 - prob) / n);
      const double emp = hist[static_cast<std::size_t>(y)] / static_cast<double>(n);
      CHECK(std::fabs(emp - prob) <= 4.0 * se + 1e-12);
    }
  }
}

TEST_CASE("inversion stops at the truncated support and saturates near lambda = 1", "[likelihood][sampler]") {
  // theta=2, lambda=-0.3: support ends at y=6 (theta + lambda*7 < 0).
  const InversionDraw d = genpoisson_invert({2.0, -0.3}, 1.0 - 1e-15);
  CHECK_FALSE(d.saturated);
  CHECK(d.value <= 6);

  const GenPoissonParams heavy{0.5, 1.0};
  const InversionDraw s = genpoisson_invert(heavy, 0.999999);
  CHECK(s.saturated);
  CHECK(s.value == genpoisson_support_cap(heavy));
  CHECK_THROWS_AS(genpoisson_sample(heavy, 0.999999), SaturationError);
}

TEST_CASE("truncnormal_logpdf", "[likelihood][prior]") {
  const TruncNormalPrior box{0.0, 0.3, -1.0, 1.0};
  CHECK(truncnormal_logpdf(2.0, box) == -kInf);
  CHECK(truncnormal_logpdf(-1.0001, box) == -kInf);
  // Oracle (mpmath, 40 digits): log N(0|0,0.3^2) = 0.28503427112126325,
  // Phi(1/0.3) - Phi(-1/0.3) = 0.99914187933360633.
  CHECK_THAT(truncnormal_logpdf(0.0, box), WithinAbs(0.28503427112126325 - std::log(0.99914187933360633), 1e-12));

  const TruncNormalPrior open{1.5, 2.0, -kInf, kInf};
  const double z = (0.3 - 1.5) / 2.0;
  CHECK_THAT(truncnormal_logpdf(0.3, open), WithinAbs(-0.5 * z * z - std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi), 1e-14));

  const TruncNormalPrior half = TruncNormalPrior::half_normal(0.1);
  CHECK_THAT(truncnormal_logpdf(0.05, half), WithinAbs(normal_logpdf(0.05, 0.0, 0.1) + std::log(2.0), 1e-13));
  CHECK(truncnormal_logpdf(-0.1, half) == -kInf);

  CHECK_THROWS_AS(truncnormal_logpdf(0.0, TruncNormalPrior{0.0, -1.0}), std::domain_error);
  CHECK_THROWS_AS(truncnormal_logpdf(0.0, TruncNormalPrior{0.0, 1.0, 1.0, 1.0}), std::domain_error);
}

TEST_CASE("normal_interval_logmass handles far tails", "[likelihood][prior]") {
  // Pr(X > 10) for a standard normal; erfc form keeps full relative precision.
  const double tail = std::exp(normal_interval_logmass(0.0, 1.0, 10.0, kInf));
  CHECK_THAT(tail, WithinRel(7.619853024160527e-24, 1e-10));
}
