#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcorrupt/error.hpp"
#include "pcorrupt/tensor.hpp"

namespace pcorrupt {

struct Var {
  std::size_t id = 0;
};

enum class Activation { tanh, relu, softplus };

// Reverse-mode tape. Values are stored in Real; adjoints are kept in double
// and only rounded when handed back to the caller. Nodes are appended in
// evaluation order, so a single reverse sweep visits them in a fixed,
// reproducible order.
template <class Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(Tensor<Real> value) { return push(std::move(value), {}, {}, "constant"); }

  Var variable(Tensor<Real> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, true});
    return Var{nodes_.size() - 1};
  }

  // Appends an op output. `inputs` decides whether the node participates in
  // the reverse sweep. Output values are checked for NaN/Inf here so that
  // every op gets overflow detection for free.
  Var push(Tensor<Real> value, std::initializer_list<Var> inputs, Backward backward,
           std::string_view op) {
    if (!value.all_finite()) {
      throw NumericError("non-finite value produced by '" + std::string(op) + "'");
    }
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_.at(in.id).needs_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
    return Var{nodes_.size() - 1};
  }

  const Tensor<Real>& value(Var v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  // Adjoint buffer, allocated on first touch.
  std::vector<double>& grad(Var v) {
    auto& node = nodes_.at(v.id);
    if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
  }

  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  void backward(Var loss) {
    if (value(loss).size() != 1) throw ValidationError("backward() needs a scalar loss");
    if (!needs_grad(loss)) return;
    grad(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.backward && !node.grad.empty()) node.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    std::vector<double> grad;
    Backward backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ops {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// Split a tensor shape into (outer=N, channels=dim1, inner=prod(dims 2..)).
struct ChannelLayout {
  std::size_t outer = 1, channels = 1, inner = 1;
};

inline ChannelLayout channel_layout(const Shape& s) {
  ChannelLayout l;
  if (s.size() < 2) throw ValidationError("per-channel op needs rank >= 2, got " + shape_string(s));
  l.outer = s[0];
  l.channels = s[1];
  for (std::size_t i = 2; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::tanh:
      return std::tanh(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::softplus:
      return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return x;
}

// Derivative expressed through input x (and output y where cheaper).
inline double activate_derivative(Activation a, double x, double y) {
  switch (a) {
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::softplus:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return 1.0;
}

}  // namespace detail

// Contiguous window [offset, offset+volume(shape)) of a flat vector.
template <class Real>
Var slice(Tape<Real>& t, Var src, std::size_t offset, Shape shape) {
  const auto& s = t.value(src);
  const std::size_t len = shape_volume(shape);
  detail::require(offset + len <= s.size(), "slice out of range");
  Tensor<Real> out(shape);
  for (std::size_t i = 0; i < len; ++i) out[i] = s[offset + i];
  return t.push(std::move(out), {src},
                [src, offset, len](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  auto& gs = tp.grad(src);
                  for (std::size_t i = 0; i < len; ++i) gs[offset + i] += g[i];
                },
                "slice");
}

template <class Real>
Var reshape(Tape<Real>& t, Var x, Shape shape) {
  Tensor<Real> out = t.value(x).reshaped(std::move(shape));
  return t.push(std::move(out), {x},
                [x](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  auto& gx = tp.grad(x);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                },
                "reshape");
}

// y[N,out] = x[N,in] * w[out,in]^T
template <class Real>
Var linear(Tape<Real>& t, Var x, Var w) {
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  detail::require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1),
                  "linear: incompatible shapes " + shape_string(xv.shape()) + " and " +
                      shape_string(wv.shape()));
  const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  Tensor<Real> y({n, out});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) {
        acc += static_cast<double>(xv[r * in + i]) * static_cast<double>(wv[o * in + i]);
      }
      y[r * out + o] = static_cast<Real>(acc);
    }
  }
  return t.push(std::move(y), {x, w},
                [x, w, n, in, out](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  if (tp.needs_grad(x)) {
                    const auto& wv2 = tp.value(w);
                    auto& gx = tp.grad(x);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t i = 0; i < in; ++i) {
                        double acc = 0.0;
                        for (std::size_t o = 0; o < out; ++o) {
                          acc += g[r * out + o] * static_cast<double>(wv2[o * in + i]);
                        }
                        gx[r * in + i] += acc;
                      }
                    }
                  }
                  if (tp.needs_grad(w)) {
                    const auto& xv2 = tp.value(x);
                    auto& gw = tp.grad(w);
                    for (std::size_t o = 0; o < out; ++o) {
                      for (std::size_t i = 0; i < in; ++i) {
                        double acc = 0.0;
                        for (std::size_t r = 0; r < n; ++r) {
                          acc += g[r * out + o] * static_cast<double>(xv2[r * in + i]);
                        }
                        gw[o * in + i] += acc;
                      }
                    }
                  }
                },
                "linear");
}

// Adds b[C] along dimension 1 (features of [N,C] or channels of [N,C,H,W]).
template <class Real>
Var add_channel_bias(Tape<Real>& t, Var x, Var b) {
  const auto& xv = t.value(x);
  const auto l = detail::channel_layout(xv.shape());
  detail::require(t.value(b).size() == l.channels, "bias length does not match channel count");
  const auto& bv = t.value(b);
  Tensor<Real> y(xv.shape());
  for (std::size_t r = 0; r < l.outer; ++r)
    for (std::size_t c = 0; c < l.channels; ++c)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t at = (r * l.channels + c) * l.inner + i;
        y[at] = static_cast<Real>(static_cast<double>(xv[at]) + static_cast<double>(bv[c]));
      }
  return t.push(std::move(y), {x, b},
                [x, b, l](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  if (tp.needs_grad(x)) {
                    auto& gx = tp.grad(x);
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  }
                  if (tp.needs_grad(b)) {
                    auto& gb = tp.grad(b);
                    for (std::size_t c = 0; c < l.channels; ++c) {
                      double acc = 0.0;
                      for (std::size_t r = 0; r < l.outer; ++r)
                        for (std::size_t i = 0; i < l.inner; ++i) acc += g[(r * l.channels + c) * l.inner + i];
                      gb[c] += acc;
                    }
                  }
                },
                "add_channel_bias");
}

// y = x * scale[c] + shift[c] along dimension 1: learnable affine
// normalisation without batch statistics.
template <class Real>
Var scale_shift(Tape<Real>& t, Var x, Var scale, Var shift) {
  const auto& xv = t.value(x);
  const auto l = detail::channel_layout(xv.shape());
  detail::require(t.value(scale).size() == l.channels && t.value(shift).size() == l.channels,
                  "scale/shift length does not match channel count");
  const auto& sv = t.value(scale);
  const auto& hv = t.value(shift);
  Tensor<Real> y(xv.shape());
  for (std::size_t r = 0; r < l.outer; ++r)
    for (std::size_t c = 0; c < l.channels; ++c)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t at = (r * l.channels + c) * l.inner + i;
        y[at] = static_cast<Real>(static_cast<double>(xv[at]) * static_cast<double>(sv[c]) +
                                  static_cast<double>(hv[c]));
      }
  return t.push(std::move(y), {x, scale, shift},
                [x, scale, shift, l](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  const auto& xv2 = tp.value(x);
                  const auto& sv2 = tp.value(scale);
                  if (tp.needs_grad(x)) {
                    auto& gx = tp.grad(x);
                    for (std::size_t r = 0; r < l.outer; ++r)
                      for (std::size_t c = 0; c < l.channels; ++c)
                        for (std::size_t i = 0; i < l.inner; ++i) {
                          const std::size_t at = (r * l.channels + c) * l.inner + i;
                          gx[at] += g[at] * static_cast<double>(sv2[c]);
                        }
                  }
                  if (tp.needs_grad(scale) || tp.needs_grad(shift)) {
                    std::vector<double> gs(l.channels, 0.0), gh(l.channels, 0.0);
                    for (std::size_t c = 0; c < l.channels; ++c) {
                      for (std::size_t r = 0; r < l.outer; ++r)
                        for (std::size_t i = 0; i < l.inner; ++i) {
                          const std::size_t at = (r * l.channels + c) * l.inner + i;
                          gs[c] += g[at] * static_cast<double>(xv2[at]);
                          gh[c] += g[at];
                        }
                    }
                    if (tp.needs_grad(scale)) {
                      auto& a = tp.grad(scale);
                      for (std::size_t c = 0; c < l.channels; ++c) a[c] += gs[c];
                    }
                    if (tp.needs_grad(shift)) {
                      auto& a = tp.grad(shift);
                      for (std::size_t c = 0; c < l.channels; ++c) a[c] += gh[c];
                    }
                  }
                },
                "scale_shift");
}

template <class Real>
Var activation(Tape<Real>& t, Var x, Activation a) {
  const auto& xv = t.value(x);
  Tensor<Real> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    y[i] = static_cast<Real>(detail::activate(a, static_cast<double>(xv[i])));
  }
  return t.push(std::move(y), {x},
                [x, a](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  const auto& xv2 = tp.value(x);
                  const auto& yv = tp.value(Var{self});
                  auto& gx = tp.grad(x);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    // tanh' from the unrounded output keeps the adjoint consistent
                    // with the double-precision forward value.
                    const double xd = static_cast<double>(xv2[i]);
                    const double yd = a == Activation::tanh ? std::tanh(xd) : static_cast<double>(yv[i]);
                    gx[i] += g[i] * detail::activate_derivative(a, xd, yd);
                  }
                },
                "activation");
}

// Valid (no padding), stride-1 2-D convolution.
// x: [N,C,H,W], k: [F,C,KH,KW] -> [N,F,H-KH+1,W-KW+1]
template <class Real>
Var conv2d(Tape<Real>& t, Var x, Var k) {
  const auto& xv = t.value(x);
  const auto& kv = t.value(k);
  detail::require(xv.rank() == 4 && kv.rank() == 4 && xv.dim(1) == kv.dim(1) &&
                      xv.dim(2) >= kv.dim(2) && xv.dim(3) >= kv.dim(3),
                  "conv2d: incompatible shapes " + shape_string(xv.shape()) + " and " +
                      shape_string(kv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t f = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor<Real> y({n, f, oh, ow});
  auto xi = [=](std::size_t b, std::size_t ch, std::size_t r, std::size_t col) {
    return ((b * c + ch) * h + r) * w + col;
  };
  auto ki = [=](std::size_t o, std::size_t ch, std::size_t r, std::size_t col) {
    return ((o * c + ch) * kh + r) * kw + col;
  };
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t col = 0; col < ow; ++col) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t dr = 0; dr < kh; ++dr)
              for (std::size_t dc = 0; dc < kw; ++dc)
                acc += static_cast<double>(xv[xi(b, ch, r + dr, col + dc)]) *
                       static_cast<double>(kv[ki(o, ch, dr, dc)]);
          y[((b * f + o) * oh + r) * ow + col] = static_cast<Real>(acc);
        }
  return t.push(std::move(y), {x, k},
                [=](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  const auto& xv2 = tp.value(x);
                  const auto& kv2 = tp.value(k);
                  auto gi = [=](std::size_t b, std::size_t o, std::size_t r, std::size_t col) {
                    return ((b * f + o) * oh + r) * ow + col;
                  };
                  if (tp.needs_grad(k)) {
                    auto& gk = tp.grad(k);
                    for (std::size_t o = 0; o < f; ++o)
                      for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t dr = 0; dr < kh; ++dr)
                          for (std::size_t dc = 0; dc < kw; ++dc) {
                            double acc = 0.0;
                            for (std::size_t b = 0; b < n; ++b)
                              for (std::size_t r = 0; r < oh; ++r)
                                for (std::size_t col = 0; col < ow; ++col)
                                  acc += g[gi(b, o, r, col)] *
                                         static_cast<double>(xv2[xi(b, ch, r + dr, col + dc)]);
                            gk[ki(o, ch, dr, dc)] += acc;
                          }
                  }
                  if (tp.needs_grad(x)) {
                    auto& gx = tp.grad(x);
                    for (std::size_t b = 0; b < n; ++b)
                      for (std::size_t o = 0; o < f; ++o)
                        for (std::size_t r = 0; r < oh; ++r)
                          for (std::size_t col = 0; col < ow; ++col) {
                            const double go = g[gi(b, o, r, col)];
                            for (std::size_t ch = 0; ch < c; ++ch)
                              for (std::size_t dr = 0; dr < kh; ++dr)
                                for (std::size_t dc = 0; dc < kw; ++dc)
                                  gx[xi(b, ch, r + dr, col + dc)] +=
                                      go * static_cast<double>(kv2[ki(o, ch, dr, dc)]);
                          }
                  }
                },
                "conv2d");
}

// Mean over rows of -log softmax(logits)[label].
template <class Real>
Var softmax_cross_entropy(Tape<Real>& t, Var logits, std::span<const int> labels) {
  const auto& lv = t.value(logits);
  detail::require(lv.rank() == 2 && lv.dim(0) == labels.size(),
                  "cross-entropy: logits " + shape_string(lv.shape()) + " vs " +
                      std::to_string(labels.size()) + " labels");
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  std::vector<double> probs(n * k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    detail::require(label >= 0 && static_cast<std::size_t>(label) < k, "label out of range");
    double mx = static_cast<double>(lv[r * k]);
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, static_cast<double>(lv[r * k + c]));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      probs[r * k + c] = std::exp(static_cast<double>(lv[r * k + c]) - mx);
      z += probs[r * k + c];
    }
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] /= z;
    total += (mx + std::log(z)) - static_cast<double>(lv[r * k + label]);
  }
  Tensor<Real> out({1});
  out[0] = static_cast<Real>(total / static_cast<double>(n));
  std::vector<int> owned(labels.begin(), labels.end());
  return t.push(std::move(out), {logits},
                [logits, probs = std::move(probs), owned = std::move(owned), n, k](Tape<Real>& tp,
                                                                                   std::size_t self) {
                  const double g = tp.grad(Var{self})[0] / static_cast<double>(n);
                  auto& gl = tp.grad(logits);
                  for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < k; ++c) {
                      const double onehot = static_cast<int>(c) == owned[r] ? 1.0 : 0.0;
                      gl[r * k + c] += g * (probs[r * k + c] - onehot);
                    }
                },
                "softmax_cross_entropy");
}

// Mean over rows of mean_j (pred - target)^2.
template <class Real>
Var mean_squared_error(Tape<Real>& t, Var pred, const Tensor<Real>& target) {
  const auto& pv = t.value(pred);
  detail::require(pv.size() == target.size() && pv.rank() >= 1 && target.size() > 0,
                  "mse: prediction " + shape_string(pv.shape()) + " vs target " +
                      shape_string(target.shape()));
  const std::size_t n = pv.dim(0);
  const std::size_t m = pv.size() / n;
  std::vector<double> diff(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    diff[i] = static_cast<double>(pv[i]) - static_cast<double>(target[i]);
    total += diff[i] * diff[i];
  }
  Tensor<Real> out({1});
  out[0] = static_cast<Real>(total / static_cast<double>(n * m));
  return t.push(std::move(out), {pred},
                [pred, diff = std::move(diff), n, m](Tape<Real>& tp, std::size_t self) {
                  const double g = tp.grad(Var{self})[0] * 2.0 / static_cast<double>(n * m);
                  auto& gp = tp.grad(pred);
                  for (std::size_t i = 0; i < diff.size(); ++i) gp[i] += g * diff[i];
                },
                "mean_squared_error");
}

template <class Real>
Var scale(Tape<Real>& t, Var x, double factor) {
  const auto& xv = t.value(x);
  Tensor<Real> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = static_cast<Real>(static_cast<double>(xv[i]) * factor);
  return t.push(std::move(y), {x},
                [x, factor](Tape<Real>& tp, std::size_t self) {
                  const auto& g = tp.grad(Var{self});
                  auto& gx = tp.grad(x);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                },
                "scale");
}

// 0.5 * sum_i d_i x_i^2 ; d defaults to all ones.
template <class Real>
Var weighted_half_square(Tape<Real>& t, Var x, std::span<const double> weights = {}) {
  const auto& xv = t.value(x);
  detail::require(weights.empty() || weights.size() == xv.size(), "weight length mismatch");
  std::vector<double> w(xv.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = static_cast<double>(xv[i]);
    acc += 0.5 * w[i] * v * v;
  }
  Tensor<Real> out({1});
  out[0] = static_cast<Real>(acc);
  return t.push(std::move(out), {x},
                [x, w = std::move(w)](Tape<Real>& tp, std::size_t self) {
                  const double g = tp.grad(Var{self})[0];
                  const auto& xv2 = tp.value(x);
                  auto& gx = tp.grad(x);
                  for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i] * static_cast<double>(xv2[i]);
                },
                "weighted_half_square");
}

}  // namespace ops
}  // namespace pcorrupt
