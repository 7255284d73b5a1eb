#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pcorrupt/engine.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/rng.hpp"

namespace pcorrupt {

// Hessian-vector product by central differences of the gradient:
//   Hv ~ (g(w + delta v) - g(w - delta v)) / (2 delta).
// No Hessian is ever materialised.
template <class Real>
std::vector<double> hessian_vector_product(const Model<Real>& model, std::span<const Real> params,
                                           const Batch<Real>& data, std::span<const double> v, double delta) {
  if (v.size() != params.size()) throw ValidationError("direction length does not match parameter count");
  if (!(delta > 0.0)) throw ValidationError("HVP step must be positive");
  std::vector<Real> up(params.size()), down(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    up[i] = static_cast<Real>(static_cast<double>(params[i]) + delta * v[i]);
    down[i] = static_cast<Real>(static_cast<double>(params[i]) - delta * v[i]);
  }
  const auto gu = eval_grad(model, std::span<const Real>(up), data);
  const auto gd = eval_grad(model, std::span<const Real>(down), data);
  std::vector<double> hv(params.size());
  for (std::size_t i = 0; i < hv.size(); ++i) {
    hv[i] = (static_cast<double>(gu.grad[i]) - static_cast<double>(gd.grad[i])) / (2.0 * delta);
    if (!std::isfinite(hv[i])) throw NumericError("non-finite Hessian-vector product");
  }
  return hv;
}

inline double default_hvp_delta(double param_l2) { return 1e-4 * (1.0 + param_l2); }

struct TraceEstimate {
  double trace = 0.0;
  double std_error = 0.0;
  std::size_t probes = 0;
};

// Hutchinson estimator tr(H) ~ mean over Rademacher v of v.Hv.
// `delta` <= 0 selects 1e-4 * (1 + ||w||_2).
template <class Real>
TraceEstimate hutchinson_trace(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& data,
                               std::size_t probes, CounterRng& rng, double delta = 0.0) {
  if (probes < 1) throw ValidationError("need at least one probe");
  if (delta <= 0.0) delta = default_hvp_delta(l2_norm(params));
  std::vector<double> samples(probes);
  std::vector<double> v(params.size());
  for (std::size_t s = 0; s < probes; ++s) {
    for (auto& x : v) x = rng.rademacher();
    const auto hv = hessian_vector_product(model, params, data, std::span<const double>(v), delta);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * hv[i];
    samples[s] = acc;
  }
  TraceEstimate est;
  est.probes = probes;
  double sum = 0.0;
  for (double x : samples) sum += x;
  est.trace = sum / static_cast<double>(probes);
  if (probes > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - est.trace) * (x - est.trace);
    est.std_error = std::sqrt(ss / static_cast<double>(probes - 1) / static_cast<double>(probes));
  }
  return est;
}

template <class Real>
TraceEstimate hutchinson_trace(const Model<Real>& model, const FlatParams<Real>& params, const Batch<Real>& data,
                               std::size_t probes, CounterRng& rng, double delta = 0.0) {
  return hutchinson_trace(model, std::span<const Real>(params.values), data, probes, rng, delta);
}

// Heuristic smoothness constant: the largest |v.Hv| / ||v||^2 over the
// normalised gradient direction and `directions` Gaussian directions. This is
// a lower estimate of the true local Lipschitz constant of the gradient.
template <class Real>
double estimate_smoothness(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& data,
                           std::size_t directions, CounterRng& rng, double delta = 0.0) {
  if (delta <= 0.0) delta = default_hvp_delta(l2_norm(params));
  std::vector<std::vector<double>> dirs;
  const auto g = eval_grad(model, params, data);
  if (g.grad_l2 > 0.0) {
    std::vector<double> d(g.grad.begin(), g.grad.end());
    for (auto& x : d) x /= g.grad_l2;
    dirs.push_back(std::move(d));
  }
  for (std::size_t s = 0; s < directions; ++s) {
    std::vector<double> d(params.size());
    for (auto& x : d) x = rng.gaussian();
    const double n = l2_norm(std::span<const double>(d));
    for (auto& x : d) x /= n;
    dirs.push_back(std::move(d));
  }
  double best = 0.0;
  for (const auto& d : dirs) {
    const auto hv = hessian_vector_product(model, params, data, std::span<const double>(d), delta);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * hv[i];
    best = std::max(best, std::abs(acc));
  }
  return best;
}

}  // namespace pcorrupt
