#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"

using namespace pcorrupt;

namespace {

// Feasible point of S: random support of size <= n, Gaussian direction
// rescaled onto the p-sphere of radius eps.
std::vector<double> feasible_point(const CorruptionConstraint& c, CounterRng& rng) {
  const std::size_t k = c.mask.size();
  const std::size_t size = 1 + rng.uniform_index(c.n);
  auto order = rng.permutation(k);
  std::vector<double> a(k, 0.0);
  for (std::size_t j = 0; j < size; ++j) a[order[j]] = rng.gaussian();
  const double norm = lp_norm(a, c.p);
  for (auto& x : a) x = c.epsilon * x / norm;
  return a;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> gaussian_vector(std::size_t k, CounterRng& rng) {
  std::vector<double> v(k);
  for (auto& x : v) x = rng.gaussian();
  return v;
}

}  // namespace

TEST(TopN, Examples) {
  EXPECT_EQ(top_n({3, -1, 4}, 2), (std::vector<double>{3, 0, 4}));
  EXPECT_EQ(top_n({2, -2, 1}, 1), (std::vector<double>{2, 0, 0}));
  const std::vector<double> v{0.5, -7, 2, 0};
  EXPECT_EQ(top_n(v, 4), v);
}

TEST(TopN, RejectsOutOfRangeCount) {
  EXPECT_THROW(top_n({1, 2}, 0), ValidationError);
  EXPECT_THROW(top_n({1, 2}, 3), ValidationError);
}

TEST(TopN, ComparisonCountGrowsAsKLogN) {
  CounterRng rng(3);
  for (std::size_t k : {1000u, 10000u, 100000u}) {
    const auto v = gaussian_vector(k, rng);
    for (std::size_t n : {1u, 8u, 64u}) {
      std::size_t calls = 0;
      top_n_positions(std::span<const double>(v), n, &calls);
      const double budget = 3.0 * static_cast<double>(k) * std::max(1.0, std::log2(static_cast<double>(n) + 1.0));
      EXPECT_LE(static_cast<double>(calls), budget) << "k=" << k << " n=" << n;
    }
  }
}

TEST(SolveConstrainedMax, EuclideanExample) {
  const auto a = solve_constrained_max({3, 0, 4}, make_constraint(2, 2, 3, full_mask(3)));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_NEAR(a.values[0], 1.2, 1e-15);
  EXPECT_NEAR(a.values[1], 1.6, 1e-15);
  EXPECT_NEAR(a.linear_value, 10.0, 1e-14);
}

TEST(SolveConstrainedMax, InfinityNormExample) {
  const auto a = solve_constrained_max({3, -1, 4}, make_constraint(kInfNorm, 0.1, 2, full_mask(3)));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(a.values, (std::vector<double>{0.1, 0.1}));
  EXPECT_NEAR(a.linear_value, 0.7, 1e-15);
}

TEST(SolveConstrainedMax, OneNormConcentratesOnLargestLowestIndex) {
  const auto a = solve_constrained_max({-5, 1, 5}, make_constraint(1, 0.3, 3, full_mask(3)));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{0}));
  EXPECT_EQ(a.values, (std::vector<double>{-0.3}));
  EXPECT_NEAR(a.linear_value, 1.5, 1e-15);
}

TEST(SolveConstrainedMax, MaskRestrictsSupport) {
  const auto a = solve_constrained_max({100, 3, -100, 4}, make_constraint(2, 1, 2, {1, 3}));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{1, 3}));
  EXPECT_NEAR(a.values[0], 0.6, 1e-15);
  EXPECT_NEAR(a.values[1], 0.8, 1e-15);
}

TEST(SolveConstrainedMax, ZeroOnSupportIsDegenerate) {
  EXPECT_THROW(solve_constrained_max({0, 0, 0}, make_constraint(2, 1, 2, full_mask(3))), DegenerateDirectionError);
  EXPECT_THROW(solve_constrained_max({5, 0, 0}, make_constraint(2, 1, 1, {1, 2})), DegenerateDirectionError);
}

TEST(SolveConstrainedMax, ExactZerosInWindowGetNoMass) {
  const auto a = solve_constrained_max({0, 2, 0}, make_constraint(1.5, 0.5, 3, full_mask(3)));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{1}));
  EXPECT_NEAR(a.values[0], 0.5, 1e-15);
}

TEST(SolveConstrainedMax, InvalidConstraintsRejected) {
  EXPECT_THROW(make_constraint(0.5, 1, 1, {0}), ValidationError);
  EXPECT_THROW(make_constraint(2, 0, 1, {0}), ValidationError);
  EXPECT_THROW(make_constraint(2, 1, 2, {0}), ValidationError);
  EXPECT_THROW(make_constraint(2, 1, 1, {}), ValidationError);
  EXPECT_THROW(make_constraint(2, 1, 1, {2, 1}), ValidationError);
  EXPECT_THROW(solve_constrained_max({1, 2}, make_constraint(2, 1, 1, {5})), ValidationError);
}

// 10^6 random feasible boundary points never beat the closed form.
TEST(SolveConstrainedMax, BeatsBruteForceSamplerAtP15) {
  const std::vector<double> v{3, -1, 4};
  const auto c = make_constraint(1.5, 1, 3, full_mask(3));
  const auto a = solve_constrained_max(v, c);
  EXPECT_NEAR(dot(a.dense(3), v), a.linear_value, 1e-12);
  CounterRng rng(15);
  double best = -1e300;
  for (int t = 0; t < 1000000; ++t) best = std::max(best, dot(feasible_point(c, rng), v));
  EXPECT_GE(a.linear_value - best, -1e-9);
  EXPECT_LT(a.linear_value - best, 1e-3);  // the sampler gets close
}

TEST(SolveConstrainedMax, HolderOptimalityAcrossNorms) {
  CounterRng rng(21);
  for (double p : {1.0, 1.5, 2.0, 3.0, kInfNorm}) {
    for (std::size_t n : {1u, 3u, 6u}) {
      const auto c = make_constraint(p, 0.7, n, full_mask(6));
      for (int t = 0; t < 10000; ++t) {
        const auto v = gaussian_vector(6, rng);
        const auto a = solve_constrained_max(v, c);
        ASSERT_LE(dot(feasible_point(c, rng), v), a.linear_value + 1e-9) << "p=" << p << " n=" << n;
      }
    }
  }
}

TEST(SolveConstrainedMax, NormExactAndSparse) {
  CounterRng rng(5);
  for (double p : {1.0, 1.2, 2.0, 2.5, 7.0, kInfNorm}) {
    for (std::size_t n : {1u, 4u, 50u}) {
      const auto c = make_constraint(p, 1e-3, n, full_mask(50));
      for (int t = 0; t < 200; ++t) {
        const auto a = solve_constrained_max(gaussian_vector(50, rng), c);
        EXPECT_LT(testutil::rel_err(a.norm(p), 1e-3), 1e-6);
        EXPECT_LE(a.nonzeros(), n);
        EXPECT_TRUE(std::is_sorted(a.indices.begin(), a.indices.end()));
      }
    }
  }
}

TEST(SolveConstrainedMax, ScaleEquivariance) {
  CounterRng rng(8);
  for (double p : {1.0, 1.5, 2.0, 4.0, kInfNorm}) {
    const auto c = make_constraint(p, 0.2, 5, full_mask(9));
    auto v = gaussian_vector(9, rng);
    const auto a = solve_constrained_max(v, c);
    for (auto& x : v) x *= 37.5;
    const auto b = solve_constrained_max(v, c);
    EXPECT_EQ(a.indices, b.indices);
    for (std::size_t j = 0; j < a.values.size(); ++j) EXPECT_NEAR(a.values[j], b.values[j], 1e-14);
    EXPECT_LT(testutil::rel_err(b.linear_value, 37.5 * a.linear_value), 1e-12);
  }
}

TEST(SolveConstrainedMax, GeneralFormulaMatchesEuclideanPath) {
  CounterRng rng(2);
  const auto c = make_constraint(2, 0.4, 7, full_mask(12));
  for (int t = 0; t < 100; ++t) {
    const auto v = gaussian_vector(12, rng);
    const auto a = solve_constrained_max(v, c, SolvePath::closed_form);
    const auto b = solve_constrained_max(v, c, SolvePath::general);
    ASSERT_EQ(a.indices, b.indices);
    for (std::size_t j = 0; j < a.values.size(); ++j) EXPECT_NEAR(a.values[j], b.values[j], 1e-9);
    EXPECT_NEAR(a.linear_value, b.linear_value, 1e-9);
  }
}

TEST(SolveConstrainedMax, LargePApproachesSignPattern) {
  const std::vector<double> v{3, -1, 4, 0.5};
  const auto lim = solve_constrained_max(v, make_constraint(kInfNorm, 1, 3, full_mask(4)));
  EXPECT_EQ(lim.values, (std::vector<double>{1, -1, 1}));
  const auto big = solve_constrained_max(v, make_constraint(1e6, 1, 3, full_mask(4)));
  ASSERT_EQ(big.indices, lim.indices);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(big.values[j], lim.values[j], 1e-5);
}

TEST(RandomCorruption, EuclideanFullIsNormalisedGaussian) {
  const auto c = make_constraint(2, 0.25, 4, full_mask(4));
  CounterRng a(7), b(7);
  const auto r = gaussian_vector(4, b);
  const double norm = lp_norm(r, 2.0);
  const auto x = random_corruption(c, a);
  EXPECT_EQ(x.provenance, Provenance::random);
  ASSERT_EQ(x.nonzeros(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.values[i], 0.25 * r[i] / norm, 1e-16);
}

TEST(RandomCorruption, SeedIsBitReproducible) {
  const auto c = make_constraint(2, 1, 4, full_mask(4));
  CounterRng a(7), b(7);
  EXPECT_EQ(random_corruption(c, a).values, random_corruption(c, b).values);
}

// First coordinate of a uniform point on the 2-sphere is uniform on [-1, 1].
TEST(RandomCorruption, FirstCoordinateUniformOnTwoSphere) {
  const auto c = make_constraint(2, 2.0, 3, full_mask(3));
  CounterRng rng(99);
  std::vector<double> u;
  u.reserve(100000);
  for (int t = 0; t < 100000; ++t) u.push_back(random_corruption(c, rng).dense(3)[0] / 2.0);
  std::sort(u.begin(), u.end());
  double ks = 0.0;
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double f = (u[i] + 1.0) / 2.0;
    ks = std::max({ks, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  EXPECT_LT(ks, 0.01);
}

TEST(GradientCorruption, Examples) {
  const auto a = gradient_corruption(std::vector<double>{3, 4}, make_constraint(2, 0.5, 2, full_mask(2)));
  EXPECT_EQ(a.provenance, Provenance::gradient);
  EXPECT_NEAR(a.values[0], 0.3, 1e-15);
  EXPECT_NEAR(a.values[1], 0.4, 1e-15);
  EXPECT_NEAR(a.linear_value, 2.5, 1e-15);

  const auto b = gradient_corruption(std::vector<double>{3, -1, 4}, make_constraint(kInfNorm, 1, 1, full_mask(3)));
  EXPECT_EQ(b.dense(3), (std::vector<double>{0, 0, 1}));
  EXPECT_EQ(b.linear_value, 4.0);
}

TEST(GradientCorruption, ZeroGradientIsDegenerate) {
  EXPECT_THROW(gradient_corruption(std::vector<double>(5, 0.0), make_constraint(2, 1, 5, full_mask(5))),
               DegenerateDirectionError);
}

TEST(GradientCorruption, QuadraticProbeRealisedChange) {
  QuadraticProbe<double> q(2);
  const auto w = q.make_params({3.0, 4.0});
  const auto g = eval_grad(q, w, dummy_batch<double>());
  const auto a = gradient_corruption(g.grad, make_constraint(2, 0.1, 2, full_mask(2)));
  const auto moved = apply_corruption(w, a);
  const double dl = eval_loss(q, moved, dummy_batch<double>()) - g.loss;
  EXPECT_NEAR(dl, 0.505, 1e-13);
}

TEST(ApplyCorruption, SingleIndex) {
  FlatParams<double> w;
  w.values = {1, 2, 3};
  CorruptionVector a;
  a.indices = {2};
  a.values = {0.1};
  const auto out = apply_corruption(w, a);
  EXPECT_EQ(out.values, (std::vector<double>{1, 2, 3.1}));
  EXPECT_EQ(w.values, (std::vector<double>{1, 2, 3}));
}

TEST(ApplyCorruption, OutOfRangeIndexRejected) {
  FlatParams<float> w;
  w.values = {1, 2, 3};
  CorruptionVector a;
  a.indices = {3};
  a.values = {1.0};
  EXPECT_THROW(apply_corruption(w, a), ValidationError);
}

TEST(ApplyCorruption, NegationRestoresDyadicValues) {
  FlatParams<double> w;
  w.values = {0.5, -1.25, 3.0, 8.0};
  CorruptionVector a;
  a.indices = {0, 3};
  a.values = {0.125, -0.0625};
  EXPECT_EQ(apply_corruption(apply_corruption(w, a), a.negated()).values, w.values);
}

TEST(ApplyCorruption, DisplacementHasConstraintNorm) {
  CounterRng rng(4);
  FlatParams<double> w;
  w.values = gaussian_vector(20, rng);
  for (double p : {1.0, 2.0, 3.0, kInfNorm}) {
    const auto a = random_corruption(make_constraint(p, 0.05, 6, full_mask(20)), rng);
    const auto moved = apply_corruption(w, a);
    std::vector<double> diff(20);
    for (std::size_t i = 0; i < 20; ++i) diff[i] = moved.values[i] - w.values[i];
    EXPECT_LT(testutil::rel_err(lp_norm(diff, p), 0.05), 1e-6);
  }
}

TEST(NormString, RoundTrips) {
  EXPECT_EQ(norm_string(2.0), "2");
  EXPECT_EQ(norm_string(kInfNorm), "inf");
  EXPECT_EQ(parse_norm("inf"), kInfNorm);
  EXPECT_EQ(parse_norm("1.5"), 1.5);
  EXPECT_THROW(parse_norm("two"), ValidationError);
}
