#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcorrupt/engine.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/rng.hpp"
#include "pcorrupt/tape.hpp"

namespace pcorrupt {

enum class Architecture { mlp, convnet_small, linear_softmax };
enum class Normalization { none, per_layer_scale_bias };
enum class LossKind { cross_entropy, mse };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::mlp: return "mlp";
    case Architecture::convnet_small: return "convnet-small";
    case Architecture::linear_softmax: return "linear-softmax";
  }
  return "mlp";
}
inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
  }
  return "tanh";
}
inline std::string_view to_string(Normalization n) {
  return n == Normalization::none ? "none" : "per-layer-scale-bias";
}
inline std::string_view to_string(LossKind l) { return l == LossKind::cross_entropy ? "cross-entropy" : "mse"; }

inline Architecture architecture_from_string(std::string_view s) {
  for (auto a : {Architecture::mlp, Architecture::convnet_small, Architecture::linear_softmax})
    if (to_string(a) == s) return a;
  throw ValidationError("unknown architecture '" + std::string(s) + "'");
}
inline Activation activation_from_string(std::string_view s) {
  for (auto a : {Activation::tanh, Activation::relu, Activation::softplus})
    if (to_string(a) == s) return a;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}
inline Normalization normalization_from_string(std::string_view s) {
  for (auto n : {Normalization::none, Normalization::per_layer_scale_bias})
    if (to_string(n) == s) return n;
  throw ValidationError("unknown normalization '" + std::string(s) + "'");
}
inline LossKind loss_from_string(std::string_view s) {
  for (auto l : {LossKind::cross_entropy, LossKind::mse})
    if (to_string(l) == s) return l;
  throw ValidationError("unknown loss '" + std::string(s) + "'");
}

// Desk-scale architecture description.
//
//   mlp            layer_sizes = [in, hidden..., out]
//   linear-softmax layer_sizes = [in, out]
//   convnet-small  layer_sizes = [channels, height, width, filters, out]:
//                  one 3x3 valid convolution with `filters` maps, then a
//                  fully-connected output layer on the flattened maps.
//
// With normalization enabled every hidden layer is followed by a learnable
// per-feature (per-channel for the convolution) scale and bias, applied
// before the activation.
struct ModelSpec {
  Architecture architecture = Architecture::mlp;
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::tanh;
  Normalization normalization = Normalization::none;
  LossKind loss = LossKind::cross_entropy;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

  std::size_t input_width() const {
    if (architecture == Architecture::convnet_small) return layer_sizes[0] * layer_sizes[1] * layer_sizes[2];
    return layer_sizes.front();
  }
  std::size_t output_width() const { return layer_sizes.back(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw ValidationError("layer_sizes needs at least 2 entries");
    for (auto s : layer_sizes)
      if (s < 1) throw ValidationError("layer sizes must be >= 1");
    if (architecture == Architecture::linear_softmax) {
      if (layer_sizes.size() != 2) throw ValidationError("linear-softmax takes exactly [in, out]");
      if (normalization != Normalization::none)
        throw ValidationError("linear-softmax has no hidden layer to normalize");
    }
    if (architecture == Architecture::convnet_small) {
      if (layer_sizes.size() != 5)
        throw ValidationError("convnet-small takes [channels, height, width, filters, out]");
      if (layer_sizes[1] < 3 || layer_sizes[2] < 3)
        throw ValidationError("convnet-small needs height and width >= 3");
    }
    if (loss == LossKind::cross_entropy && output_width() < 2)
      throw ValidationError("cross-entropy needs at least 2 output classes");
  }
};

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"architecture", to_string(s.architecture)},
                     {"layer_sizes", s.layer_sizes},
                     {"activation", to_string(s.activation)},
                     {"normalization", to_string(s.normalization)},
                     {"loss", to_string(s.loss)},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  s.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  s.activation = activation_from_string(j.value("activation", std::string("tanh")));
  s.normalization = normalization_from_string(j.value("normalization", std::string("none")));
  s.loss = loss_from_string(j.value("loss", std::string("cross-entropy")));
  s.seed = j.value("seed", std::uint64_t{0});
}

template <class Real>
class Network final : public Model<Real> {
 public:
  explicit Network(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    build_layout();
  }

  const ModelSpec& spec() const { return spec_; }

  std::size_t param_count() const override { return count_; }
  std::vector<ParamGroup> param_layout() const override { return layout_; }
  bool is_classifier() const override { return spec_.loss == LossKind::cross_entropy; }
  bool is_smooth() const override {
    return spec_.architecture == Architecture::linear_softmax || spec_.activation != Activation::relu;
  }
  std::string describe() const override {
    std::string s(to_string(spec_.architecture));
    s += "[";
    for (std::size_t i = 0; i < spec_.layer_sizes.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(spec_.layer_sizes[i]);
    }
    return s + "]";
  }

  Var forward(Tape<Real>& tape, Var params, const Tensor<Real>& inputs) const override {
    const std::size_t n = inputs.dim(0);
    if (inputs.size() != n * spec_.input_width()) {
      throw IncompatibleParamsError("model " + describe() + " expects " + std::to_string(spec_.input_width()) +
                                    " input features per example, got " + shape_string(inputs.shape()));
    }
    auto param = [&](std::size_t g) { return ops::slice(tape, params, layout_[g].offset, layout_[g].shape); };

    if (spec_.architecture == Architecture::convnet_small) {
      const auto& ls = spec_.layer_sizes;
      Var x = tape.constant(inputs.reshaped({n, ls[0], ls[1], ls[2]}));
      std::size_t g = 0;
      x = ops::conv2d(tape, x, param(g++));
      x = ops::add_channel_bias(tape, x, param(g++));
      if (spec_.normalization == Normalization::per_layer_scale_bias) {
        const Var s = param(g++);
        x = ops::scale_shift(tape, x, s, param(g++));
      }
      x = ops::activation(tape, x, spec_.activation);
      x = ops::reshape(tape, x, {n, ls[3] * (ls[1] - 2) * (ls[2] - 2)});
      x = ops::linear(tape, x, param(g++));
      return ops::add_channel_bias(tape, x, param(g++));
    }

    Var x = tape.constant(inputs.reshaped({n, spec_.input_width()}));
    const std::size_t layers = spec_.layer_sizes.size() - 1;
    std::size_t g = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      x = ops::linear(tape, x, param(g++));
      x = ops::add_channel_bias(tape, x, param(g++));
      if (l + 1 < layers) {
        if (spec_.normalization == Normalization::per_layer_scale_bias) {
          const Var s = param(g++);
          x = ops::scale_shift(tape, x, s, param(g++));
        }
        x = ops::activation(tape, x, spec_.activation);
      }
    }
    return x;
  }

  Var loss(Tape<Real>& tape, Var outputs, const Batch<Real>& batch) const override {
    if (spec_.loss == LossKind::cross_entropy) {
      if (batch.labels.empty()) throw ValidationError("cross-entropy model needs class labels");
      for (int l : batch.labels) {
        if (static_cast<std::size_t>(l) >= spec_.output_width())
          throw ValidationError("class label " + std::to_string(l) + " >= output dimension " +
                                std::to_string(spec_.output_width()));
      }
      return ops::softmax_cross_entropy(tape, outputs, std::span<const int>(batch.labels));
    }
    if (!batch.targets.empty()) return ops::mean_squared_error(tape, outputs, batch.targets);
    // Regression onto one-hot class indicators.
    Tensor<Real> onehot({batch.size(), spec_.output_width()});
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto l = static_cast<std::size_t>(batch.labels[r]);
      if (l >= spec_.output_width()) throw ValidationError("class label out of range");
      onehot[r * spec_.output_width() + l] = Real(1);
    }
    return ops::mean_squared_error(tape, outputs, onehot);
  }

  // Deterministic initial parameters: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  // for weights, zeros for biases, ones for normalization scales.
  FlatParams<Real> initial_params() const {
    FlatParams<Real> p;
    p.groups = layout_;
    p.values.assign(count_, Real(0));
    CounterRng rng(spec_.seed);
    for (std::size_t gi = 0; gi < layout_.size(); ++gi) {
      const auto& g = layout_[gi];
      switch (g.kind) {
        case ParamKind::fully_connected:
        case ParamKind::convolution: {
          const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[gi]));
          for (std::size_t i = 0; i < g.length; ++i) p.values[g.offset + i] = static_cast<Real>(rng.uniform(-bound, bound));
          break;
        }
        case ParamKind::normalization_scale:
          for (std::size_t i = 0; i < g.length; ++i) p.values[g.offset + i] = Real(1);
          break;
        default:
          break;
      }
    }
    return p;
  }

 private:
  void add(std::string name, ParamKind kind, int layer, Shape shape, std::size_t fan_in = 0) {
    const std::size_t len = shape_volume(shape);
    layout_.push_back(ParamGroup{std::move(name), count_, len, kind, layer, std::move(shape)});
    fan_in_.push_back(fan_in);
    count_ += len;
  }

  void build_layout() {
    const auto& ls = spec_.layer_sizes;
    const bool norm = spec_.normalization == Normalization::per_layer_scale_bias;
    if (spec_.architecture == Architecture::convnet_small) {
      const std::size_t c = ls[0], h = ls[1], w = ls[2], f = ls[3], out = ls[4];
      add("conv0.weight", ParamKind::convolution, 0, {f, c, 3, 3}, c * 9);
      add("conv0.bias", ParamKind::bias, 0, {f});
      if (norm) {
        add("conv0.norm.scale", ParamKind::normalization_scale, 0, {f});
        add("conv0.norm.bias", ParamKind::normalization_bias, 0, {f});
      }
      const std::size_t flat = f * (h - 2) * (w - 2);
      add("fc1.weight", ParamKind::fully_connected, 1, {out, flat}, flat);
      add("fc1.bias", ParamKind::bias, 1, {out});
      return;
    }
    const std::size_t layers = ls.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string base = "layer" + std::to_string(l);
      const int li = static_cast<int>(l);
      add(base + ".weight", ParamKind::fully_connected, li, {ls[l + 1], ls[l]}, ls[l]);
      add(base + ".bias", ParamKind::bias, li, {ls[l + 1]});
      if (norm && l + 1 < layers) {
        add(base + ".norm.scale", ParamKind::normalization_scale, li, {ls[l + 1]});
        add(base + ".norm.bias", ParamKind::normalization_bias, li, {ls[l + 1]});
      }
    }
  }

  ModelSpec spec_;
  std::vector<ParamGroup> layout_;
  std::vector<std::size_t> fan_in_;
  std::size_t count_ = 0;
};

template <class Real>
struct BuiltModel {
  std::shared_ptr<const Network<Real>> model;
  FlatParams<Real> params;
};

template <class Real>
BuiltModel<Real> build_model(const ModelSpec& spec) {
  auto net = std::make_shared<const Network<Real>>(spec);
  auto params = net->initial_params();
  return {std::move(net), std::move(params)};
}

// Raw model outputs for a batch of inputs.
template <class Real>
Tensor<Real> predict(const Model<Real>& model, std::span<const Real> params, const Tensor<Real>& inputs) {
  if (params.size() != model.param_count()) {
    throw IncompatibleParamsError("model " + model.describe() + " expects " +
                                  std::to_string(model.param_count()) + " parameters, got " +
                                  std::to_string(params.size()));
  }
  Tape<Real> tape;
  Tensor<Real> w({params.size()});
  std::copy(params.begin(), params.end(), w.storage().begin());
  const Var pv = tape.constant(std::move(w));
  return tape.value(model.forward(tape, pv, inputs));
}

struct MetricValue {
  std::string name;
  double value = 0.0;
};

// Fraction of rows whose argmax output equals the label. Ties go to the
// lowest class index.
template <class Real>
MetricValue accuracy(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& data) {
  if (!model.is_classifier() || data.labels.empty()) {
    throw UnsupportedMetricError("accuracy needs a classification model and labelled data (" +
                                 model.describe() + ")");
  }
  data.validate();
  const Tensor<Real> out = predict(model, params, data.inputs);
  const std::size_t n = data.size();
  const std::size_t k = out.size() / n;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (out[r * k + c] > out[r * k + best]) best = c;
    }
    if (static_cast<int>(best) == data.labels[r]) ++correct;
  }
  return {"accuracy", static_cast<double>(correct) / static_cast<double>(n)};
}

template <class Real>
MetricValue accuracy(const Model<Real>& model, const FlatParams<Real>& params, const Batch<Real>& data) {
  return accuracy(model, std::span<const Real>(params.values), data);
}

// Accuracy for classifiers, mean loss otherwise.
template <class Real>
MetricValue default_metric(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& data) {
  if (model.is_classifier() && !data.labels.empty()) return accuracy(model, params, data);
  return {"mean-loss", static_cast<double>(eval_loss(model, params, data))};
}

template <class Real>
MetricValue default_metric(const Model<Real>& model, const FlatParams<Real>& params, const Batch<Real>& data) {
  return default_metric(model, std::span<const Real>(params.values), data);
}

}  // namespace pcorrupt
