#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pcorrupt/model.hpp"

namespace pcorrupt {

// L(w) = 0.5 * sum_i d_i w_i^2, independent of the batch. With all d_i = 1
// this is the quadratic probe 0.5*||w||^2 whose Hessian is the identity, so
// every Taylor expansion of it is exact at second order.
template <class Real>
class QuadraticProbe final : public Model<Real> {
 public:
  explicit QuadraticProbe(std::size_t k) : diag_(k, 1.0) {}
  explicit QuadraticProbe(std::vector<double> diag) : diag_(std::move(diag)) {}

  std::size_t param_count() const override { return diag_.size(); }

  std::vector<ParamGroup> param_layout() const override {
    return {ParamGroup{"w", 0, diag_.size(), ParamKind::other, 0, {diag_.size()}}};
  }

  Var forward(Tape<Real>&, Var params, const Tensor<Real>&) const override { return params; }

  Var loss(Tape<Real>& tape, Var outputs, const Batch<Real>&) const override {
    return ops::weighted_half_square(tape, outputs, std::span<const double>(diag_));
  }

  bool is_classifier() const override { return false; }
  std::string describe() const override { return "quadratic-probe(k=" + std::to_string(diag_.size()) + ")"; }

  FlatParams<Real> make_params(std::vector<Real> values) const {
    if (values.size() != diag_.size()) throw ValidationError("quadratic probe: wrong parameter count");
    return FlatParams<Real>{std::move(values), param_layout()};
  }

 private:
  std::vector<double> diag_;
};

// Loss that never depends on the parameters.
template <class Real>
class ConstantLossModel final : public Model<Real> {
 public:
  ConstantLossModel(std::size_t k, double value) : k_(k), value_(value) {}

  std::size_t param_count() const override { return k_; }
  std::vector<ParamGroup> param_layout() const override {
    return {ParamGroup{"w", 0, k_, ParamKind::other, 0, {k_}}};
  }
  Var forward(Tape<Real>&, Var params, const Tensor<Real>&) const override { return params; }
  Var loss(Tape<Real>& tape, Var, const Batch<Real>&) const override {
    Tensor<Real> c({1});
    c[0] = static_cast<Real>(value_);
    return tape.constant(std::move(c));
  }
  bool is_classifier() const override { return false; }
  std::string describe() const override { return "constant-loss"; }

 private:
  std::size_t k_;
  double value_;
};

// Wraps another model and multiplies its loss by a fixed factor.
template <class Real>
class ScaledLoss final : public Model<Real> {
 public:
  ScaledLoss(ModelPtr<Real> inner, double factor) : inner_(std::move(inner)), factor_(factor) {}

  std::size_t param_count() const override { return inner_->param_count(); }
  std::vector<ParamGroup> param_layout() const override { return inner_->param_layout(); }
  Var forward(Tape<Real>& tape, Var params, const Tensor<Real>& inputs) const override {
    return inner_->forward(tape, params, inputs);
  }
  Var loss(Tape<Real>& tape, Var outputs, const Batch<Real>& batch) const override {
    return ops::scale(tape, inner_->loss(tape, outputs, batch), factor_);
  }
  bool is_classifier() const override { return inner_->is_classifier(); }
  bool is_smooth() const override { return inner_->is_smooth(); }
  std::string describe() const override {
    return "scaled(" + std::to_string(factor_) + ", " + inner_->describe() + ")";
  }

 private:
  ModelPtr<Real> inner_;
  double factor_;
};

// A one-row batch for models that ignore their data.
template <class Real>
Batch<Real> dummy_batch() {
  Batch<Real> b;
  b.inputs = Tensor<Real>({1, 1});
  b.targets = Tensor<Real>({1, 1});
  return b;
}

}  // namespace pcorrupt
