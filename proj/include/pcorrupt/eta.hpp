#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pcorrupt/error.hpp"
#include "pcorrupt/rng.hpp"

namespace pcorrupt {

// Distribution of eta = |a.g| / (eps * G) for a uniformly random direction a
// on the k-sphere: the absolute first coordinate of a uniform unit vector.
//
//   p(x) = 2 Gamma(k/2) / (sqrt(pi) Gamma((k-1)/2)) * (1 - x^2)^((k-3)/2)

namespace detail {

inline void check_eta_args(double x, std::size_t k) {
  if (k < 2) throw DomainError("eta distribution needs k >= 2");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("eta is supported on [0, 1]");
}

// log of 2 Gamma(k/2) / (sqrt(pi) Gamma((k-1)/2)); lgamma keeps k > 300 finite.
inline double eta_log_coefficient(std::size_t k) {
  const double kd = static_cast<double>(k);
  return std::log(2.0) + std::lgamma(kd / 2.0) - 0.5 * std::log(std::numbers::pi) - std::lgamma((kd - 1.0) / 2.0);
}

}  // namespace detail

inline double eta_density(double x, std::size_t k) {
  detail::check_eta_args(x, k);
  if (k == 2 && x == 1.0) return std::numeric_limits<double>::infinity();
  const double power = 0.5 * (static_cast<double>(k) - 3.0);
  const double one_minus = 1.0 - x * x;
  if (power == 0.0) return std::exp(detail::eta_log_coefficient(k));
  if (one_minus == 0.0) return 0.0;
  return std::exp(detail::eta_log_coefficient(k) + power * std::log(one_minus));
}

// P(eta <= x) by adaptive Gauss-Kronrod quadrature of the density after the
// substitution x = sin(t), which removes the k = 2 endpoint singularity:
//   P(eta <= x) = C_k * integral_0^asin(x) cos(t)^(k-2) dt.
inline double eta_cdf(double x, std::size_t k) {
  detail::check_eta_args(x, k);
  if (x == 0.0) return 0.0;
  const double log_c = detail::eta_log_coefficient(k);
  const double power = static_cast<double>(k) - 2.0;
  auto integrand = [&](double t) {
    const double c = std::cos(t);
    if (c <= 0.0) return power == 0.0 ? std::exp(log_c) : 0.0;
    return std::exp(log_c + power * std::log(c));
  };
  const double upper = std::asin(x);
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, upper, 15, 1e-11, &err);
  return std::min(1.0, std::max(0.0, v));
}

// |first coordinate| of `trials` uniform unit vectors in R^k.
inline std::vector<double> sample_eta(std::size_t k, std::size_t trials, CounterRng& rng) {
  if (k < 2) throw DomainError("eta distribution needs k >= 2");
  std::vector<double> out(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    double first = rng.gaussian();
    double ss = first * first;
    for (std::size_t i = 1; i < k; ++i) {
      const double z = rng.gaussian();
      ss += z * z;
    }
    out[t] = ss > 0.0 ? std::abs(first) / std::sqrt(ss) : 0.0;
  }
  return out;
}

}  // namespace pcorrupt
