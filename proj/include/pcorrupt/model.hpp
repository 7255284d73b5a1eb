#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pcorrupt/error.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/tape.hpp"
#include "pcorrupt/tensor.hpp"

namespace pcorrupt {

// A labelled set of examples. Classification batches carry `labels`,
// regression batches carry `targets` with leading dimension N.
template <class Real>
struct Batch {
  Tensor<Real> inputs;
  std::vector<int> labels;
  Tensor<Real> targets;

  std::size_t size() const { return inputs.empty() ? 0 : inputs.dim(0); }
  bool is_classification() const { return !labels.empty(); }

  void validate() const {
    if (size() == 0) throw ValidationError("batch is empty");
    if (labels.empty() == targets.empty()) {
      throw ValidationError("batch needs exactly one of labels or targets");
    }
    if (!labels.empty() && labels.size() != size()) {
      throw ValidationError("batch has " + std::to_string(size()) + " inputs but " +
                            std::to_string(labels.size()) + " labels");
    }
    if (!targets.empty() && targets.dim(0) != size()) {
      throw ValidationError("batch has " + std::to_string(size()) + " inputs but " +
                            std::to_string(targets.dim(0)) + " target rows");
    }
    for (int l : labels) {
      if (l < 0) throw ValidationError("negative class label");
    }
  }
};

// Rows `rows` of `batch`, in that order.
template <class Real>
Batch<Real> select_rows(const Batch<Real>& batch, std::span<const std::size_t> rows) {
  const std::size_t n = batch.size();
  const std::size_t width = batch.inputs.size() / n;
  Shape in_shape = batch.inputs.shape();
  in_shape[0] = rows.size();
  Tensor<Real> inputs(in_shape);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < width; ++j) inputs[r * width + j] = batch.inputs[rows[r] * width + j];
  Batch<Real> out;
  out.inputs = std::move(inputs);
  if (!batch.labels.empty()) {
    for (auto r : rows) out.labels.push_back(batch.labels[r]);
  } else {
    const std::size_t tw = batch.targets.size() / n;
    Shape t_shape = batch.targets.shape();
    t_shape[0] = rows.size();
    Tensor<Real> targets(t_shape);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < tw; ++j) targets[r * tw + j] = batch.targets[rows[r] * tw + j];
    out.targets = std::move(targets);
  }
  return out;
}

template <class To, class From>
Batch<To> convert_batch(const Batch<From>& in) {
  auto conv = [](const Tensor<From>& t) {
    if (t.empty()) return Tensor<To>();
    std::vector<To> data(t.storage().begin(), t.storage().end());
    return Tensor<To>(t.shape(), std::move(data));
  };
  return Batch<To>{conv(in.inputs), in.labels, conv(in.targets)};
}

// Interface every differentiable model implements. Models are immutable after
// construction; all evaluation state lives on the caller's tape.
template <class Real>
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t param_count() const = 0;
  virtual std::vector<ParamGroup> param_layout() const = 0;

  // Forward pass to model outputs (logits for classifiers).
  virtual Var forward(Tape<Real>& tape, Var params, const Tensor<Real>& inputs) const = 0;

  // Mean per-example loss of `outputs` against the batch targets.
  virtual Var loss(Tape<Real>& tape, Var outputs, const Batch<Real>& batch) const = 0;

  virtual bool is_classifier() const = 0;

  // False when a non-smooth activation (ReLU) is in the graph.
  virtual bool is_smooth() const { return true; }

  virtual std::string describe() const = 0;
};

template <class Real>
using ModelPtr = std::shared_ptr<const Model<Real>>;

}  // namespace pcorrupt
