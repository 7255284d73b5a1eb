#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "pcorrupt.hpp"

namespace testutil {

using pcorrupt::Batch;
using pcorrupt::Tensor;

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// n rows of width `width` drawn from N(0, 1), labels cycling over `classes`.
template <class Real>
Batch<Real> random_batch(std::size_t n, std::size_t width, int classes, std::uint64_t seed) {
  pcorrupt::CounterRng rng(seed);
  std::vector<Real> xs(n * width);
  for (auto& x : xs) x = static_cast<Real>(rng.gaussian());
  Batch<Real> b;
  b.inputs = Tensor<Real>({n, width}, std::move(xs));
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  return b;
}

template <class Real>
Batch<Real> two_moons_train(std::uint64_t seed = 0, double noise = 0.2, std::size_t points = 1000) {
  pcorrupt::DatasetSource src;
  src.seed = seed;
  src.noise = noise;
  src.points = points;
  return pcorrupt::load_dataset<Real>(src).train;
}

}  // namespace testutil
