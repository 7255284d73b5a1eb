#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcorrupt/error.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/rng.hpp"

namespace pcorrupt {

inline constexpr double kInfNorm = std::numeric_limits<double>::infinity();

inline bool is_inf_norm(double p) { return std::isinf(p) && p > 0; }

// Dual exponent q = p/(p-1); 1 <-> +inf.
inline double dual_exponent(double p) {
  if (p < 1.0 || std::isnan(p)) throw DomainError("norm exponent p must be >= 1");
  if (p == 1.0) return kInfNorm;
  if (is_inf_norm(p)) return 1.0;
  return p / (p - 1.0);
}

inline std::string norm_string(double p) {
  if (is_inf_norm(p)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

inline double parse_norm(std::string_view s) {
  if (s == "inf" || s == "+inf" || s == "infinity") return kInfNorm;
  std::size_t used = 0;
  double p = 0.0;
  try {
    p = std::stod(std::string(s), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(p >= 1.0)) throw ValidationError("invalid norm exponent '" + std::string(s) + "'");
  return p;
}

// L_p norm accumulated in double, scaled by max|x| so large p never overflows.
template <class T>
double lp_norm(std::span<const T> v, double p) {
  double mx = 0.0;
  for (auto x : v) mx = std::max(mx, std::abs(static_cast<double>(x)));
  if (mx == 0.0 || is_inf_norm(p)) return mx;
  double acc = 0.0;
  if (p == 1.0) {
    for (auto x : v) acc += std::abs(static_cast<double>(x));
    return acc;
  }
  for (auto x : v) acc += std::pow(std::abs(static_cast<double>(x)) / mx, p);
  return mx * std::pow(acc, 1.0 / p);
}

template <class T>
double lp_norm(const std::vector<T>& v, double p) {
  return lp_norm(std::span<const T>(v), p);
}

inline std::vector<std::size_t> full_mask(std::size_t k) {
  std::vector<std::size_t> m(k);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return m;
}

// S = { a : ||a||_p = epsilon, ||a||_0 <= n, supp(a) within mask }.
struct CorruptionConstraint {
  double p = 2.0;
  double epsilon = 0.0;
  std::size_t n = 1;
  std::vector<std::size_t> mask;

  std::size_t subspace_size() const { return mask.size(); }

  void validate() const {
    if (!(p >= 1.0)) throw ValidationError("corruption norm p must be >= 1");
    if (!(epsilon > 0.0) || std::isinf(epsilon)) throw ValidationError("corruption epsilon must be positive and finite");
    if (mask.empty()) throw ValidationError("corruption subspace mask is empty");
    if (n < 1 || n > mask.size()) {
      throw ValidationError("corruption count n=" + std::to_string(n) + " outside [1, " +
                            std::to_string(mask.size()) + "]");
    }
    for (std::size_t i = 1; i < mask.size(); ++i) {
      if (mask[i] <= mask[i - 1]) throw ValidationError("subspace mask must be sorted and distinct");
    }
  }
};

inline CorruptionConstraint make_constraint(double p, double epsilon, std::size_t n, std::vector<std::size_t> mask) {
  CorruptionConstraint c{p, epsilon, n, std::move(mask)};
  c.validate();
  return c;
}

enum class Provenance { random, gradient, oracle };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::random: return "random";
    case Provenance::gradient: return "gradient";
    case Provenance::oracle: return "oracle";
  }
  return "oracle";
}

// Sparse perturbation: parallel sorted `indices` / nonzero `values`.
struct CorruptionVector {
  std::vector<std::size_t> indices;
  std::vector<double> values;
  Provenance provenance = Provenance::oracle;
  double linear_value = 0.0;

  std::size_t nonzeros() const { return indices.size(); }
  double norm(double p) const { return lp_norm(std::span<const double>(values), p); }

  double dot(std::span<const double> v) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < indices.size(); ++j) acc += values[j] * v[indices[j]];
    return acc;
  }

  CorruptionVector negated() const {
    CorruptionVector out = *this;
    for (auto& v : out.values) v = -v;
    out.linear_value = -linear_value;
    return out;
  }

  std::vector<double> dense(std::size_t k) const {
    std::vector<double> out(k, 0.0);
    for (std::size_t j = 0; j < indices.size(); ++j) out.at(indices[j]) = values[j];
    return out;
  }
};

// Positions of the n largest |v|, ordered by decreasing magnitude with ties
// broken toward the lower position. Partial sort: O(len * log n) comparisons.
// `comparisons`, when given, receives the comparator call count.
template <class T>
std::vector<std::size_t> top_n_positions(std::span<const T> v, std::size_t n, std::size_t* comparisons = nullptr) {
  if (n < 1 || n > v.size()) {
    throw ValidationError("top_n: n=" + std::to_string(n) + " outside [1, " + std::to_string(v.size()) + "]");
  }
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t calls = 0;
  auto before = [&](std::size_t a, std::size_t b) {
    ++calls;
    const double ma = std::abs(static_cast<double>(v[a]));
    const double mb = std::abs(static_cast<double>(v[b]));
    return ma > mb || (ma == mb && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), before);
  order.resize(n);
  if (comparisons) *comparisons = calls;
  return order;
}

// h = top_n(v): v on its n largest-magnitude coordinates, zero elsewhere.
template <class T>
std::vector<double> top_n(std::span<const T> v, std::size_t n) {
  std::vector<double> h(v.size(), 0.0);
  for (auto i : top_n_positions(v, n)) h[i] = static_cast<double>(v[i]);
  return h;
}

inline std::vector<double> top_n(const std::vector<double>& v, std::size_t n) {
  return top_n(std::span<const double>(v), n);
}

enum class SolvePath {
  closed_form,  // dedicated p = 1, 2, +inf branches, general formula otherwise
  general       // general-p formula for every p in (1, +inf)
};

namespace detail {

inline double signum(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Maximiser of a.v over S, with v already gathered onto the mask
// (sub[j] = v[mask[j]]).
inline CorruptionVector solve_gathered(std::span<const double> sub, const CorruptionConstraint& c, Provenance prov,
                                       SolvePath path) {
  c.validate();
  for (double x : sub) {
    if (!std::isfinite(x)) throw ValidationError("direction vector has a non-finite entry");
  }
  auto top = top_n_positions(sub, c.n);
  // Exact zeros inside the top-n window carry no mass.
  while (!top.empty() && sub[top.back()] == 0.0) top.pop_back();
  if (top.empty()) throw DegenerateDirectionError("direction vector is zero on the corruption subspace");

  const double eps = c.epsilon;
  const double hmax = std::abs(sub[top.front()]);
  std::vector<std::pair<std::size_t, double>> entries;
  double linear = 0.0;

  if (c.p == 1.0) {
    const std::size_t j = top.front();
    entries.emplace_back(j, eps * signum(sub[j]));
    linear = eps * hmax;
  } else if (is_inf_norm(c.p)) {
    double l1 = 0.0;
    for (auto j : top) {
      entries.emplace_back(j, eps * signum(sub[j]));
      l1 += std::abs(sub[j]);
    }
    linear = eps * l1;
  } else if (c.p == 2.0 && path == SolvePath::closed_form) {
    double acc = 0.0;
    for (auto j : top) acc += (sub[j] / hmax) * (sub[j] / hmax);
    const double l2 = hmax * std::sqrt(acc);
    for (auto j : top) entries.emplace_back(j, eps * sub[j] / l2);
    linear = eps * l2;
  } else {
    // a_j = eps * sgn(h_j) |h_j|^(1/(p-1)) / || |h|^(1/(p-1)) ||_p, with |h|
    // rescaled by max|h| (the ratio is scale free) so the power never overflows.
    const double expo = 1.0 / (c.p - 1.0);
    std::vector<double> t(top.size());
    for (std::size_t i = 0; i < top.size(); ++i) t[i] = std::pow(std::abs(sub[top[i]]) / hmax, expo);
    const double tn = lp_norm(std::span<const double>(t), c.p);
    for (std::size_t i = 0; i < top.size(); ++i) {
      const double a = eps * signum(sub[top[i]]) * t[i] / tn;
      if (a != 0.0) entries.emplace_back(top[i], a);
    }
    const double q = dual_exponent(c.p);
    double acc = 0.0;
    for (auto j : top) acc += std::pow(std::abs(sub[j]) / hmax, q);
    linear = eps * hmax * std::pow(acc, 1.0 / q);
  }

  std::sort(entries.begin(), entries.end());
  CorruptionVector out;
  out.provenance = prov;
  out.linear_value = linear;
  for (const auto& [j, a] : entries) {
    out.indices.push_back(c.mask[j]);
    out.values.push_back(a);
  }
  return out;
}

template <class T>
std::vector<double> gather(std::span<const T> v, const std::vector<std::size_t>& mask) {
  std::vector<double> sub(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j] >= v.size()) {
      throw ValidationError("subspace index " + std::to_string(mask[j]) + " outside vector of length " +
                            std::to_string(v.size()));
    }
    sub[j] = static_cast<double>(v[mask[j]]);
  }
  return sub;
}

}  // namespace detail

// argmax over a in S of a.v, where v is indexed like the full parameter
// vector and only its mask coordinates matter. linear_value is the attained
// maximum eps * ||top_n(v)||_{p/(p-1)}.
template <class T>
CorruptionVector solve_constrained_max(std::span<const T> v, const CorruptionConstraint& c,
                                       SolvePath path = SolvePath::closed_form) {
  const auto sub = detail::gather(v, c.mask);
  return detail::solve_gathered(sub, c, Provenance::oracle, path);
}

inline CorruptionVector solve_constrained_max(const std::vector<double>& v, const CorruptionConstraint& c,
                                              SolvePath path = SolvePath::closed_form) {
  return solve_constrained_max(std::span<const double>(v), c, path);
}

// Random corruption: the constrained maximiser for an i.i.d. standard normal
// direction on the subspace.
inline CorruptionVector random_corruption(const CorruptionConstraint& c, CounterRng& rng) {
  c.validate();
  std::vector<double> r(c.mask.size());
  for (;;) {
    bool nonzero = false;
    for (auto& x : r) {
      x = rng.gaussian();
      nonzero = nonzero || x != 0.0;
    }
    if (nonzero) break;
  }
  return detail::solve_gathered(r, c, Provenance::random, SolvePath::closed_form);
}

// Gradient-based corruption: maximiser of the first-order loss change a.g.
template <class T>
CorruptionVector gradient_corruption(std::span<const T> g, const CorruptionConstraint& c) {
  const auto sub = detail::gather(g, c.mask);
  return detail::solve_gathered(sub, c, Provenance::gradient, SolvePath::closed_form);
}

template <class T>
CorruptionVector gradient_corruption(const std::vector<T>& g, const CorruptionConstraint& c) {
  return gradient_corruption(std::span<const T>(g), c);
}

// w + a in a fresh copy. Each touched coordinate is updated in double and
// rounded once to the parameter type.
template <class Real>
FlatParams<Real> apply_corruption(const FlatParams<Real>& params, const CorruptionVector& a) {
  if (a.indices.size() != a.values.size()) throw ValidationError("corruption indices/values length mismatch");
  FlatParams<Real> out = params;
  for (std::size_t j = 0; j < a.indices.size(); ++j) {
    const auto i = a.indices[j];
    if (i >= out.values.size()) {
      throw ValidationError("corruption index " + std::to_string(i) + " outside parameter vector of length " +
                            std::to_string(out.values.size()));
    }
    out.values[i] = static_cast<Real>(static_cast<double>(out.values[i]) + a.values[j]);
  }
  return out;
}

template <class Real>
std::vector<Real> apply_corruption(std::span<const Real> values, const CorruptionVector& a) {
  std::vector<Real> out(values.begin(), values.end());
  for (std::size_t j = 0; j < a.indices.size(); ++j) {
    const auto i = a.indices[j];
    if (i >= out.size()) throw ValidationError("corruption index " + std::to_string(i) + " out of range");
    out[i] = static_cast<Real>(static_cast<double>(out[i]) + a.values[j]);
  }
  return out;
}

}  // namespace pcorrupt
