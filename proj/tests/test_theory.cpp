#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "helpers.hpp"

using namespace pcorrupt;

namespace {

// C_k * x * 2F1(1/2, (3-k)/2; 3/2; x^2), through the Euler transform
// (1 - z)^((k-1)/2) 2F1(1, k/2; 3/2; z) whose terms are all positive.
double eta_cdf_series(double x, std::size_t k) {
  const double kd = static_cast<double>(k);
  const double z = x * x;
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 1000000; ++n) {
    term *= (kd / 2.0 + n) / (1.5 + n) * z;
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  const double coef = 2.0 / (std::sqrt(std::numbers::pi) * std::exp(std::lgamma((kd - 1) / 2) - std::lgamma(kd / 2)));
  return coef * x * std::pow(1.0 - z, (kd - 1.0) / 2.0) * sum;
}

double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

}  // namespace

TEST(EtaDensity, UniformWhenKIsThree) {
  for (double x : {0.0, 0.1, 0.5, 0.99, 1.0}) EXPECT_NEAR(eta_density(x, 3), 1.0, 1e-14);
}

TEST(EtaDensity, KTwoAtZero) {
  EXPECT_NEAR(eta_density(0.0, 2), 2.0 / std::numbers::pi, 1e-14);
  EXPECT_TRUE(std::isinf(eta_density(1.0, 2)));
}

TEST(EtaDensity, IntegratesToOne) {
  boost::math::quadrature::tanh_sinh<double> ts;
  for (std::size_t k : {2u, 3u, 10u, 100u, 1000u}) {
    const double total = ts.integrate([k](double x) { return eta_density(x, k); }, 0.0, 1.0);
    EXPECT_NEAR(total, 1.0, 1e-6) << "k=" << k;
  }
}

TEST(EtaDensity, FiniteForLargeK) {
  EXPECT_TRUE(std::isfinite(eta_density(0.01, 5000)));
  EXPECT_GT(eta_density(0.0, 5000), 50.0);
}

TEST(EtaDensity, DomainErrors) {
  EXPECT_THROW(eta_density(-0.1, 5), DomainError);
  EXPECT_THROW(eta_density(1.1, 5), DomainError);
  EXPECT_THROW(eta_density(0.5, 1), DomainError);
  EXPECT_THROW(eta_cdf(2.0, 5), DomainError);
}

TEST(EtaCdf, EndpointsAndUniformCase) {
  for (std::size_t k : {2u, 3u, 7u, 100u, 1000u}) {
    EXPECT_NEAR(eta_cdf(1.0, k), 1.0, 1e-9) << k;
    EXPECT_EQ(eta_cdf(0.0, k), 0.0);
  }
  for (double x : {0.1, 0.37, 0.8}) EXPECT_NEAR(eta_cdf(x, 3), x, 1e-14);
  EXPECT_NEAR(eta_cdf(0.5, 2), 2.0 / std::numbers::pi * std::asin(0.5), 1e-14);
}

TEST(EtaCdf, MatchesHypergeometricSeries) {
  for (std::size_t k : {2u, 4u, 10u, 50u, 200u}) {
    for (double x : {0.05, 0.2, 0.5, 0.8}) {
      EXPECT_LT(testutil::rel_err(eta_cdf(x, k), eta_cdf_series(x, k)), 1e-9) << "k=" << k << " x=" << x;
    }
  }
}

TEST(EtaCdf, MatchesRegularisedIncompleteBeta) {
  for (std::size_t k : {2u, 10u, 100u, 1000u}) {
    for (double x : {0.01, 0.05, 0.2, 0.6}) {
      const double ref = boost::math::ibeta(0.5, (static_cast<double>(k) - 1.0) / 2.0, x * x);
      EXPECT_LT(testutil::rel_err(eta_cdf(x, k), ref), 1e-9) << "k=" << k << " x=" << x;
    }
  }
}

TEST(EtaCdf, LargeKNormalLimit) {
  const double v = eta_cdf(0.2, 100);
  EXPECT_NEAR(v, 0.954, 5e-3);
  EXPECT_NEAR(v, std::erf(0.2 * std::sqrt(100.0) / std::sqrt(2.0)), 1e-2);
  CounterRng rng(100);
  const auto s = sample_eta(100, 1000000, rng);
  const double frac = static_cast<double>(std::count_if(s.begin(), s.end(), [](double e) { return e <= 0.2; })) / 1e6;
  EXPECT_NEAR(frac, v, 1e-3);
}

TEST(EtaCdf, ConcentratesNearZero) {
  for (std::size_t k : {10u, 100u, 1000u}) {
    const double v = eta_cdf(3.0 / std::sqrt(static_cast<double>(k)), k);
    EXPECT_GE(v, 0.95) << k;
    EXPECT_LE(v, 1.0);
  }
}

TEST(SampleEta, UniformForKThree) {
  CounterRng rng(3);
  EXPECT_LT(ks_distance(sample_eta(3, 100000, rng), [](double x) { return x; }), 0.01);
}

TEST(SampleEta, ArcsineForKTwo) {
  CounterRng rng(2);
  EXPECT_LT(ks_distance(sample_eta(2, 100000, rng), [](double x) { return 2.0 / std::numbers::pi * std::asin(x); }),
            0.01);
}

// empirical CDF against eta_cdf on a 1000-point grid
TEST(SampleEta, AgreesWithCdfForKTen) {
  CounterRng rng(10);
  auto s = sample_eta(10, 100000, rng);
  std::sort(s.begin(), s.end());
  double worst = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double x = i / 1000.0;
    const double emp = static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) / 1e5;
    worst = std::max(worst, std::abs(emp - eta_cdf(x, 10)));
  }
  EXPECT_LT(worst, 0.01);
}

TEST(SampleEta, LargeKMean) {
  CounterRng rng(4);
  const auto s = sample_eta(10000, 2000, rng);
  double mean = 0.0;
  for (double e : s) mean += e;
  mean /= static_cast<double>(s.size());
  EXPECT_LT(testutil::rel_err(mean, std::sqrt(2.0 / (std::numbers::pi * 10000.0))), 0.05);
}

TEST(SampleEta, RejectsSmallK) {
  CounterRng rng(0);
  EXPECT_THROW(sample_eta(1, 10, rng), DomainError);
}

// E|dL_random| / dL_grad shrinks like 1/sqrt(k) on the quadratic probe.
TEST(RandomVersusGradient, GapWidensWithDimension) {
  double prev = 0.0;
  for (std::size_t k : {10u, 100u, 1000u}) {
    QuadraticProbe<double> q(k);
    const auto w = q.make_params(std::vector<double>(k, 1.0));
    const auto c = make_constraint(2, 1e-2, k, full_mask(k));
    const auto grad = estimate_indicator_gradient(q, w, dummy_batch<double>(), c);
    const auto mc = estimate_indicator_montecarlo(q, w, dummy_batch<double>(), c, 4000, CounterRng(k));
    double mean_abs = 0.0;
    for (double d : mc.deltas) mean_abs += std::abs(d);
    mean_abs /= static_cast<double>(mc.trials);
    const double ratio = mean_abs / grad.delta_loss;
    if (prev > 0.0) EXPECT_LE(ratio, prev / 2.0) << k;
    prev = ratio;
  }
}

TEST(BoundExponent, Values) {
  EXPECT_EQ(bound_exponent(2), -0.5);
  EXPECT_EQ(bound_exponent(kInfNorm), 0.5);
  EXPECT_EQ(bound_exponent(4), 0.0);
  EXPECT_EQ(bound_exponent(1), 0.0);
  EXPECT_THROW(bound_exponent(0.5), DomainError);
}

TEST(NormBeta, Values) {
  EXPECT_EQ(norm_beta(2, 9), 1.0);
  EXPECT_EQ(norm_beta(kInfNorm, 9), 3.0);
  EXPECT_EQ(norm_beta(1, 9), 1.0);
  EXPECT_NEAR(norm_beta(4, 16), 2.0, 1e-15);
}

TEST(ErrorBound, ExplicitConstant) {
  ErrorBoundInput in{kInfNorm, 4, 16, 0.1, 2.0, 8.0};
  const auto b = error_bound(in);
  // L * n * 1 * sqrt(k) * eps / (2 G sqrt(n)) = 2 * 4 * 4 * 0.1 / (2 * 8 * 2)
  EXPECT_NEAR(b.excess, 0.1, 1e-15);
  EXPECT_EQ(b.g_exponent, 0.5);
  EXPECT_NEAR(b.order_term, 2.0 * 2.0 * 4.0 * 0.1 / 8.0, 1e-15);
}

TEST(ErrorBound, DomainErrors) {
  EXPECT_THROW(error_bound({0.5, 1, 1, 0.1, 1, 1}), DomainError);
  EXPECT_THROW(error_bound({2, 3, 2, 0.1, 1, 1}), DomainError);
  EXPECT_THROW(error_bound({2, 1, 2, 0.0, 1, 1}), DomainError);
  EXPECT_THROW(error_bound({2, 1, 2, 0.1, 0.0, 1}), DomainError);
}

// Quadratic probe, L = 1, G = ||w||: oracle excess over the gradient point
// stays under the bound on a decade grid of eps.
TEST(ErrorBound, HoldsOnQuadraticProbe) {
  QuadraticProbe<double> q(2);
  const auto w = q.make_params({3.0, 4.0});
  for (double p : {1.5, 2.0, 3.0, kInfNorm}) {
    for (double eps : {1.0, 1e-1, 1e-2, 1e-3}) {
      const auto c = make_constraint(p, eps, 2, full_mask(2));
      const auto grad = estimate_indicator_gradient(q, w, dummy_batch<double>(), c);
      const auto oracle = brute_force_indicator(q, w, dummy_batch<double>(), c, 3600);
      const double measured = oracle.value / grad.delta_loss - 1.0;
      const auto b = error_bound({p, 2, 2, eps, 1.0, 5.0});
      EXPECT_GE(measured, -1e-9) << p << " " << eps;
      EXPECT_LE(measured, b.excess + 1e-9) << p << " " << eps;
    }
  }
}
