#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

#include "pcorrupt/corruption.hpp"
#include "pcorrupt/engine.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/rng.hpp"

namespace pcorrupt {

struct IndicatorEstimate {
  double delta_loss = 0.0;   // L(w + a) - L(w)
  double first_order = 0.0;  // a.g = eps * ||top_n(g)||_q
  double ratio = 0.0;        // delta_loss / first_order
  double base_loss = 0.0;
  CorruptionConstraint constraint;
  CorruptionVector corruption;
};

// Loss change L(w + a) - L(w), differenced in double.
template <class Real>
double loss_change(const Model<Real>& model, std::span<const Real> params, const CorruptionVector& a,
                   const Batch<Real>& data, double base_loss) {
  const auto corrupted = apply_corruption(params, a);
  return static_cast<double>(eval_loss(model, std::span<const Real>(corrupted), data)) - base_loss;
}

// Gradient-based estimate of the worst-case loss change under `c`. The
// caller's parameters are never modified; the corrupted point is a copy.
template <class Real>
IndicatorEstimate estimate_indicator_gradient(const Model<Real>& model, std::span<const Real> params,
                                              const Batch<Real>& data, const CorruptionConstraint& c) {
  const auto report = eval_grad(model, params, data);
  IndicatorEstimate est;
  est.constraint = c;
  est.base_loss = static_cast<double>(report.loss);
  est.corruption = gradient_corruption(std::span<const Real>(report.grad), c);
  est.first_order = est.corruption.linear_value;
  est.delta_loss = loss_change(model, params, est.corruption, data, est.base_loss);
  est.ratio = est.delta_loss / est.first_order;
  return est;
}

template <class Real>
IndicatorEstimate estimate_indicator_gradient(const Model<Real>& model, const FlatParams<Real>& params,
                                              const Batch<Real>& data, const CorruptionConstraint& c) {
  return estimate_indicator_gradient(model, std::span<const Real>(params.values), data, c);
}

// Summary of |dL| over random corruption trials. alpha(p) is the smallest
// observed |dL| with at least a fraction p of trials at or below it.
struct McSummary {
  std::size_t trials = 0;
  double mean_delta = 0.0;
  double std_delta = 0.0;  // sample standard deviation of dL
  std::map<double, double> quantile_abs;
  double max_abs = 0.0;
  std::vector<double> deltas;  // per-trial dL, trial order
};

inline const std::vector<double>& mc_quantile_levels() {
  static const std::vector<double> levels{0.9, 0.95, 0.995};
  return levels;
}

inline McSummary summarize_deltas(std::vector<double> deltas) {
  if (deltas.empty()) throw ValidationError("need at least one trial");
  McSummary s;
  s.trials = deltas.size();
  double sum = 0.0;
  for (double d : deltas) sum += d;
  s.mean_delta = sum / static_cast<double>(deltas.size());
  double ss = 0.0;
  for (double d : deltas) ss += (d - s.mean_delta) * (d - s.mean_delta);
  s.std_delta = deltas.size() > 1 ? std::sqrt(ss / static_cast<double>(deltas.size() - 1)) : 0.0;
  std::vector<double> mag(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) mag[i] = std::abs(deltas[i]);
  std::sort(mag.begin(), mag.end());
  for (double level : mc_quantile_levels()) {
    auto rank = static_cast<std::size_t>(std::ceil(level * static_cast<double>(mag.size())));
    rank = std::clamp<std::size_t>(rank, 1, mag.size());
    s.quantile_abs[level] = mag[rank - 1];
  }
  s.max_abs = mag.back();
  s.deltas = std::move(deltas);
  return s;
}

// Monte-Carlo estimate from `trials` random corruptions. Trial t draws from
// rng.split(t), so results do not depend on `jobs`.
template <class Real>
McSummary estimate_indicator_montecarlo(const Model<Real>& model, std::span<const Real> params,
                                        const Batch<Real>& data, const CorruptionConstraint& c,
                                        std::size_t trials, const CounterRng& rng, unsigned jobs = 1) {
  if (trials < 1) throw ValidationError("trials must be >= 1");
  c.validate();
  const double base = static_cast<double>(eval_loss(model, params, data));
  std::vector<double> deltas(trials);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng stream = rng.split(t);
      const auto a = random_corruption(c, stream);
      deltas[t] = loss_change(model, params, a, data, base);
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(trials)));
  if (jobs == 1) {
    run(0, trials);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    const std::size_t chunk = (trials + jobs - 1) / jobs;
    for (unsigned j = 0; j < jobs; ++j) {
      const std::size_t b = j * chunk, e = std::min(trials, b + chunk);
      pool.emplace_back([&, b, e, j] {
        try {
          run(b, e);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }
  return summarize_deltas(std::move(deltas));
}

template <class Real>
McSummary estimate_indicator_montecarlo(const Model<Real>& model, const FlatParams<Real>& params,
                                        const Batch<Real>& data, const CorruptionConstraint& c,
                                        std::size_t trials, const CounterRng& rng, unsigned jobs = 1) {
  return estimate_indicator_montecarlo(model, std::span<const Real>(params.values), data, c, trials, rng, jobs);
}

enum class OracleMode { grid, sample };

struct OracleResult {
  double value = 0.0;            // best dL found
  double resolution = 0.0;       // final angular step (grid) or sample count (sample)
  std::size_t evaluations = 0;
  CorruptionVector best;
};

namespace detail {

// Point of the p-sphere of radius eps along direction `dir`.
inline std::vector<double> scale_to_sphere(std::vector<double> dir, double p, double eps) {
  const double norm = lp_norm(std::span<const double>(dir), p);
  for (auto& d : dir) d = eps * d / norm;
  return dir;
}

// Unit direction in d <= 3 dimensions from angles.
inline std::vector<double> angular_direction(std::size_t d, double theta, double phi) {
  if (d == 1) return {theta < std::numbers::pi ? 1.0 : -1.0};
  if (d == 2) return {std::cos(theta), std::sin(theta)};
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

inline void for_each_subset(std::size_t total, std::size_t size,
                            const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> pick(size);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == size) {
      fn(pick);
      return;
    }
    for (std::size_t i = start; i < total; ++i) {
      pick[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
}

}  // namespace detail

// Brute-force search for the indicator max_{a in S} dL(w, a).
//
// grid   (subspace size <= 3): for every support of size min(n, k_sub), an
//        angular grid with `resolution` steps per full turn parametrises the
//        p-sphere; the best cell is then zoomed in on (each round re-grids
//        +-1 step around the incumbent at 1/10 the step) until the angular
//        step falls below 1e-12.
// sample (any size): best of `resolution` random feasible points, each with
//        a uniformly chosen support and Gaussian direction rescaled onto the
//        p-sphere.
template <class Real>
OracleResult brute_force_indicator(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& data,
                                   const CorruptionConstraint& c, std::size_t resolution,
                                   OracleMode mode = OracleMode::grid, std::uint64_t seed = 0) {
  c.validate();
  if (resolution < 4) throw ValidationError("oracle resolution must be >= 4");
  const std::size_t ksub = c.mask.size();
  const double base = static_cast<double>(eval_loss(model, params, data));
  OracleResult res;
  res.value = -std::numeric_limits<double>::infinity();

  auto evaluate = [&](const std::vector<std::size_t>& support, const std::vector<double>& point) {
    CorruptionVector a;
    a.provenance = Provenance::oracle;
    std::vector<std::pair<std::size_t, double>> entries;
    for (std::size_t j = 0; j < support.size(); ++j)
      if (point[j] != 0.0) entries.emplace_back(c.mask[support[j]], point[j]);
    std::sort(entries.begin(), entries.end());
    for (auto& [i, v] : entries) {
      a.indices.push_back(i);
      a.values.push_back(v);
    }
    const double d = loss_change(model, params, a, data, base);
    ++res.evaluations;
    if (d > res.value) {
      res.value = d;
      res.best = std::move(a);
    }
    return d;
  };

  if (mode == OracleMode::sample) {
    CounterRng rng(seed);
    const std::size_t size = std::min(c.n, ksub);
    for (std::size_t s = 0; s < resolution; ++s) {
      auto order = rng.permutation(ksub);
      std::vector<std::size_t> support(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
      std::sort(support.begin(), support.end());
      std::vector<double> dir(size);
      bool nonzero = false;
      while (!nonzero) {
        for (auto& x : dir) {
          x = rng.gaussian();
          nonzero = nonzero || x != 0.0;
        }
      }
      evaluate(support, detail::scale_to_sphere(std::move(dir), c.p, c.epsilon));
    }
    res.resolution = static_cast<double>(resolution);
    return res;
  }

  if (ksub > 3) {
    throw ModeError("grid oracle handles subspaces of at most 3 coordinates, got " + std::to_string(ksub));
  }
  const std::size_t d = std::min(c.n, ksub);
  const double two_pi = 2.0 * std::numbers::pi;
  double final_step = 0.0;

  detail::for_each_subset(ksub, d, [&](const std::vector<std::size_t>& support) {
    if (d == 1) {
      evaluate(support, {c.epsilon});
      evaluate(support, {-c.epsilon});
      return;
    }
    auto point_at = [&](double theta, double phi) {
      return detail::scale_to_sphere(detail::angular_direction(d, theta, phi), c.p, c.epsilon);
    };
    double step = two_pi / static_cast<double>(resolution);
    double best_t = 0.0, best_f = 0.0, best_v = -std::numeric_limits<double>::infinity();
    auto probe = [&](double t, double f) {
      const double v = evaluate(support, point_at(t, f));
      if (v > best_v) {
        best_v = v;
        best_t = t;
        best_f = f;
      }
    };
    if (d == 2) {
      for (std::size_t i = 0; i < resolution; ++i) probe(step * static_cast<double>(i), 0.0);
    } else {
      const std::size_t polar = resolution / 2;
      for (std::size_t i = 0; i <= polar; ++i)
        for (std::size_t j = 0; j < resolution; ++j)
          probe(std::numbers::pi * static_cast<double>(i) / static_cast<double>(polar), step * static_cast<double>(j));
    }
    while (step > 1e-12) {
      const double ct = best_t, cf = best_f;
      const double fine = step / 10.0;
      for (int i = -10; i <= 10; ++i) {
        if (d == 2) {
          probe(ct + fine * i, 0.0);
        } else {
          for (int j = -10; j <= 10; ++j) probe(ct + fine * i, cf + fine * j);
        }
      }
      step = fine;
    }
    final_step = step;
  });
  res.resolution = final_step;
  return res;
}

template <class Real>
OracleResult brute_force_indicator(const Model<Real>& model, const FlatParams<Real>& params, const Batch<Real>& data,
                                   const CorruptionConstraint& c, std::size_t resolution,
                                   OracleMode mode = OracleMode::grid, std::uint64_t seed = 0) {
  return brute_force_indicator(model, std::span<const Real>(params.values), data, c, resolution, mode, seed);
}

}  // namespace pcorrupt
