#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pcorrupt/error.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/tape.hpp"

namespace pcorrupt {

template <class Real>
struct GradReport {
  Real loss{};
  std::vector<Real> grad;
  double grad_l2 = 0.0;
};

// Euclidean norm accumulated in double with scaling against overflow.
template <class T>
double l2_norm(std::span<const T> v) {
  double scale = 0.0;
  for (auto x : v) scale = std::max(scale, std::abs(static_cast<double>(x)));
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (auto x : v) {
    const double y = static_cast<double>(x) / scale;
    acc += y * y;
  }
  return scale * std::sqrt(acc);
}

namespace detail {

template <class Real>
void check_compatible(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch) {
  if (params.size() != model.param_count()) {
    throw IncompatibleParamsError("model " + model.describe() + " expects " +
                                  std::to_string(model.param_count()) + " parameters, got " +
                                  std::to_string(params.size()));
  }
  batch.validate();
}

template <class Real>
Var build_loss(Tape<Real>& tape, const Model<Real>& model, std::span<const Real> params,
               const Batch<Real>& batch, bool track) {
  Tensor<Real> w({params.size()});
  std::copy(params.begin(), params.end(), w.storage().begin());
  const Var pv = track ? tape.variable(std::move(w)) : tape.constant(std::move(w));
  const Var out = model.forward(tape, pv, batch.inputs);
  return model.loss(tape, out, batch);
}

}  // namespace detail

template <class Real>
Real eval_loss(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch) {
  detail::check_compatible(model, params, batch);
  Tape<Real> tape;
  const Var loss = detail::build_loss(tape, model, params, batch, false);
  return tape.value(loss)[0];
}

template <class Real>
Real eval_loss(const Model<Real>& model, const FlatParams<Real>& params, const Batch<Real>& batch) {
  return eval_loss(model, std::span<const Real>(params.values), batch);
}

template <class Real>
GradReport<Real> eval_grad(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch) {
  detail::check_compatible(model, params, batch);
  Tape<Real> tape;
  const Var loss = detail::build_loss(tape, model, params, batch, true);
  tape.backward(loss);
  GradReport<Real> report;
  report.loss = tape.value(loss)[0];
  report.grad.assign(params.size(), Real(0));
  const Var pv{0};
  if (tape.has_grad(pv)) {
    const auto& g = tape.grad(pv);
    for (std::size_t i = 0; i < g.size(); ++i) {
      report.grad[i] = static_cast<Real>(g[i]);
      if (!std::isfinite(static_cast<double>(report.grad[i]))) {
        throw NumericError("non-finite gradient at parameter " + std::to_string(i));
      }
    }
  }
  report.grad_l2 = l2_norm(std::span<const Real>(report.grad));
  return report;
}

template <class Real>
GradReport<Real> eval_grad(const Model<Real>& model, const FlatParams<Real>& params, const Batch<Real>& batch) {
  return eval_grad(model, std::span<const Real>(params.values), batch);
}

// Central differences, one coordinate at a time (2k loss evaluations).
template <class Real>
std::vector<Real> finite_diff_grad(const Model<Real>& model, std::span<const Real> params,
                                   const Batch<Real>& batch, double step) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
  detail::check_compatible(model, params, batch);
  std::vector<Real> w(params.begin(), params.end());
  std::vector<Real> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const Real saved = w[i];
    const Real up = static_cast<Real>(static_cast<double>(saved) + step);
    const Real down = static_cast<Real>(static_cast<double>(saved) - step);
    w[i] = up;
    const double lp = static_cast<double>(eval_loss(model, std::span<const Real>(w), batch));
    w[i] = down;
    const double lm = static_cast<double>(eval_loss(model, std::span<const Real>(w), batch));
    w[i] = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      throw NumericError("non-finite probe loss at coordinate " + std::to_string(i));
    }
    // Divide by the step actually realised after rounding to Real.
    const double h = static_cast<double>(up) - static_cast<double>(down);
    out[i] = static_cast<Real>((lp - lm) / h);
  }
  return out;
}

template <class Real>
std::vector<Real> finite_diff_grad(const Model<Real>& model, const FlatParams<Real>& params,
                                   const Batch<Real>& batch, double step) {
  return finite_diff_grad(model, std::span<const Real>(params.values), batch, step);
}

}  // namespace pcorrupt
