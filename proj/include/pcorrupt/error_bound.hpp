#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pcorrupt/corruption.hpp"
#include "pcorrupt/error.hpp"

namespace pcorrupt {

// beta_r = max{1, n^(1/2 - 1/r)}: ||x||_2 <= beta_r ||x||_r whenever
// ||x||_0 <= n.
inline double norm_beta(double r, std::size_t n) {
  if (r < 1.0 || std::isnan(r)) throw DomainError("norm exponent must be >= 1");
  if (n < 1) throw DomainError("n must be >= 1");
  const double expo = is_inf_norm(r) ? 0.5 : 0.5 - 1.0 / r;
  return std::max(1.0, std::pow(static_cast<double>(n), expo));
}

// g(p) = max{(p-4)/(2p), (1-p)/p}; tends to 1/2 as p -> inf.
inline double bound_exponent(double p) {
  if (p < 1.0 || std::isnan(p)) throw DomainError("norm exponent p must be >= 1");
  if (is_inf_norm(p)) return 0.5;
  return std::max((p - 4.0) / (2.0 * p), (1.0 - p) / p);
}

struct ErrorBoundInput {
  double p = 2.0;
  std::size_t n = 1;
  std::size_t k = 1;
  double epsilon = 0.0;
  double smoothness = 0.0;  // L
  double grad_norm = 0.0;   // G = ||g||_2
};

struct ErrorBound {
  // Upper bound on Delta_max / Delta(a_hat) - 1 for convex, L-smooth losses:
  //   L * beta_p^2 * beta_q * sqrt(k) * eps / (2 G sqrt(n)).
  double excess = 0.0;
  // The rate term L * n^g(p) * sqrt(k) * eps / G.
  double order_term = 0.0;
  double g_exponent = 0.0;
  double beta_p = 0.0;
  double beta_q = 0.0;
};

inline ErrorBound error_bound(const ErrorBoundInput& in) {
  if (in.p < 1.0 || std::isnan(in.p)) throw DomainError("norm exponent p must be >= 1");
  if (in.n < 1 || in.k < 1 || in.n > in.k) throw DomainError("need 1 <= n <= k");
  if (!(in.epsilon > 0.0) || !(in.smoothness > 0.0) || !(in.grad_norm > 0.0)) {
    throw DomainError("epsilon, smoothness and gradient norm must be positive");
  }
  ErrorBound b;
  b.beta_p = norm_beta(in.p, in.n);
  b.beta_q = norm_beta(dual_exponent(in.p), in.n);
  b.g_exponent = bound_exponent(in.p);
  const double nd = static_cast<double>(in.n), kd = static_cast<double>(in.k);
  b.excess = in.smoothness * b.beta_p * b.beta_p * b.beta_q * std::sqrt(kd) * in.epsilon /
             (2.0 * in.grad_norm * std::sqrt(nd));
  b.order_term = in.smoothness * std::pow(nd, b.g_exponent) * std::sqrt(kd) * in.epsilon / in.grad_norm;
  return b;
}

}  // namespace pcorrupt
