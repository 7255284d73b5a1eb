#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcorrupt/corruption.hpp"
#include "pcorrupt/data.hpp"
#include "pcorrupt/engine.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/hessian.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/rng.hpp"
#include "pcorrupt/zoo.hpp"

namespace pcorrupt {

enum class AcrtVariant { baseline, direct_lstar, grad_reg };
enum class OptimizerKind { sgd_momentum, adam_lite };

inline std::string_view to_string(AcrtVariant v) {
  switch (v) {
    case AcrtVariant::baseline: return "baseline";
    case AcrtVariant::direct_lstar: return "direct-lstar";
    case AcrtVariant::grad_reg: return "grad-reg";
  }
  return "baseline";
}

inline AcrtVariant acrt_variant_from_string(std::string_view s) {
  if (s == "baseline") return AcrtVariant::baseline;
  if (s == "direct-lstar") return AcrtVariant::direct_lstar;
  if (s == "grad-reg") return AcrtVariant::grad_reg;
  throw ValidationError("unknown training variant '" + std::string(s) + "'");
}

inline std::string_view to_string(OptimizerKind o) { return o == OptimizerKind::sgd_momentum ? "sgd-momentum" : "adam-lite"; }

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam-lite") return OptimizerKind::adam_lite;
  throw ValidationError("unknown optimizer '" + std::string(s) + "'");
}

inline constexpr double kDefaultAlpha = 0.5;

// Virtual corruption: p, epsilon, n over the whole parameter vector. n = 0
// means n = k. epsilon = 0 switches the corruption off.
struct AcrtConfig {
  AcrtVariant variant = AcrtVariant::baseline;
  std::optional<double> alpha;
  std::optional<double> lambda;
  double p = 2.0;
  double epsilon = 0.0;
  std::size_t n = 0;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t warmup_epochs = 0;
  double hvp_delta = 1e-4;
  double divergence_threshold = 1e6;

  void validate() const {
    if (variant == AcrtVariant::direct_lstar && !alpha) throw ValidationError("direct-lstar needs alpha");
    if (variant == AcrtVariant::grad_reg && !lambda) throw ValidationError("grad-reg needs lambda");
    if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    if (lambda && !(*lambda >= 0.0) ) throw ValidationError("lambda must be >= 0");
    if (!(p >= 1.0)) throw ValidationError("p must be >= 1");
    if (!(epsilon >= 0.0) || std::isinf(epsilon)) throw ValidationError("epsilon must be finite and >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(hvp_delta > 0.0)) throw ValidationError("hvp_delta must be positive");
  }

  double lambda_equivalent() const { return alpha.value_or(0.0) * epsilon; }
};

inline CorruptionConstraint virtual_constraint(const AcrtConfig& cfg, std::size_t k) {
  const std::size_t n = cfg.n == 0 ? k : std::min(cfg.n, k);
  return CorruptionConstraint{cfg.p, cfg.epsilon, n, full_mask(k)};
}

struct AcrtStep {
  double loss = 0.0;         // objective value
  double base_loss = 0.0;    // L(w)
  double first_order = 0.0;  // a.g of the virtual corruption (0 when off)
  std::vector<double> grad;
};

namespace detail {

template <class Real>
AcrtStep plain_step(const GradReport<Real>& r) {
  AcrtStep s;
  s.loss = s.base_loss = static_cast<double>(r.loss);
  s.grad.assign(r.grad.begin(), r.grad.end());
  return s;
}

}  // namespace detail

// L* = (1 - alpha) L(w) + alpha L(w + a), a = gradient corruption at w held
// constant, so grad L* = (1 - alpha) grad L(w) + alpha grad L(w + a).
template <class Real>
AcrtStep acrt_loss_direct(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch,
                          double alpha, const CorruptionConstraint& c) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  const auto r = eval_grad(model, params, batch);
  if (alpha == 0.0 || c.epsilon == 0.0 || r.grad_l2 == 0.0) return detail::plain_step(r);
  const auto a = gradient_corruption(std::span<const Real>(r.grad), c);
  const auto shifted = apply_corruption(params, a);
  const auto rs = eval_grad(model, std::span<const Real>(shifted), batch);
  AcrtStep s;
  s.base_loss = static_cast<double>(r.loss);
  s.first_order = a.linear_value;
  s.loss = (1.0 - alpha) * s.base_loss + alpha * static_cast<double>(rs.loss);
  s.grad.resize(r.grad.size());
  for (std::size_t i = 0; i < s.grad.size(); ++i)
    s.grad[i] = (1.0 - alpha) * static_cast<double>(r.grad[i]) + alpha * static_cast<double>(rs.grad[i]);
  return s;
}

// Subgradient of ||g||_q with respect to g. q = inf puts all weight on the
// largest |g_i| (lowest index on ties); q = 1 gives sgn(g).
inline std::vector<double> norm_subgradient(std::span<const double> g, double q) {
  std::vector<double> u(g.size(), 0.0);
  double m = 0.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g[i]) > m) {
      m = std::abs(g[i]);
      arg = i;
    }
  }
  if (m == 0.0) return u;
  if (is_inf_norm(q)) {
    u[arg] = g[arg] > 0 ? 1.0 : -1.0;
  } else if (q == 1.0) {
    for (std::size_t i = 0; i < g.size(); ++i) u[i] = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
  } else {
    // sgn(g) |g|^(q-1) / ||g||_q^(q-1), evaluated on g / max|g|.
    const double norm = lp_norm(g, q) / m;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
      u[i] = s * std::pow(std::abs(g[i]) / m / norm, q - 1.0);
    }
  }
  return u;
}

// L(w) + lambda ||grad L(w)||_q.
template <class Real>
double grad_reg_loss(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch,
                     double lambda, double q) {
  if (!(q >= 1.0)) throw ValidationError("q must be >= 1");
  const auto r = eval_grad(model, params, batch);
  if (lambda == 0.0) return static_cast<double>(r.loss);
  return static_cast<double>(r.loss) + lambda * lp_norm(std::span<const Real>(r.grad), q);
}

// grad L(w) + lambda H u with H u from central differences of the gradient
// along the subgradient u of ||g||_q.
template <class Real>
AcrtStep grad_reg_step(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch,
                       double lambda, double q, double delta) {
  if (!(q >= 1.0)) throw ValidationError("q must be >= 1");
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  const auto r = eval_grad(model, params, batch);
  if (lambda == 0.0) return detail::plain_step(r);
  std::vector<double> g(r.grad.begin(), r.grad.end());
  AcrtStep s = detail::plain_step(r);
  const double gnorm = lp_norm(std::span<const double>(g), q);
  s.loss += lambda * gnorm;
  if (!(gnorm >= 1e-12)) return s;
  const auto u = norm_subgradient(g, q);
  const auto hu = hessian_vector_product(model, params, batch, std::span<const double>(u), delta);
  for (std::size_t i = 0; i < s.grad.size(); ++i) s.grad[i] += lambda * hu[i];
  return s;
}

template <class Real>
std::vector<double> grad_reg_grad(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& batch,
                                  double lambda, double q, double delta) {
  return grad_reg_step(model, params, batch, lambda, q, delta).grad;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;   // mean clean batch loss
  double objective = 0.0;    // mean optimised objective
  double eval_metric = 0.0;
  std::string metric_name;
  std::optional<double> mean_first_order;  // ACRT epochs only
};

inline nlohmann::json to_json_line(const EpochLog& e, const AcrtConfig& cfg) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"objective", e.objective},
                   {"eval_metric", e.eval_metric},
                   {"metric", e.metric_name},
                   {"variant", to_string(cfg.variant)},
                   {"lambda_equiv", cfg.lambda_equivalent()}};
  j["mean_first_order"] = e.mean_first_order ? nlohmann::json(*e.mean_first_order) : nlohmann::json(nullptr);
  return j;
}

template <class Real>
struct TrainResult {
  FlatParams<Real> params;
  std::vector<EpochLog> log;
};

// Gradient step state. SGD: v = mu v + g, w -= lr v. Adam: beta1 = 0.9,
// beta2 = 0.999, eps = 1e-8, bias corrected.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double momentum, std::size_t k)
      : kind_(kind), lr_(lr), mu_(momentum), m_(k, 0.0), v_(k, 0.0) {}

  template <class Real>
  void step(std::vector<Real>& w, const std::vector<double>& g) {
    ++t_;
    if (kind_ == OptimizerKind::sgd_momentum) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        m_[i] = mu_ * m_[i] + g[i];
        w[i] = static_cast<Real>(static_cast<double>(w[i]) - lr_ * m_[i]);
      }
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
      w[i] = static_cast<Real>(static_cast<double>(w[i]) - lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps));
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, mu_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

// Minibatch training. Epoch e shuffles the train split with
// CounterRng(seed).split(e). Before `warmup_epochs` and whenever the virtual
// corruption is off (alpha = 0, lambda = 0 or epsilon = 0) each step is a plain
// gradient step, so those runs reproduce the baseline bit for bit.
template <class Real>
TrainResult<Real> train(const Model<Real>& model, FlatParams<Real> init, const Dataset<Real>& data,
                        const AcrtConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (init.size() != model.param_count()) throw IncompatibleParamsError("initial parameters do not fit the model");
  data.train.validate();
  const std::size_t k = init.size();
  const auto c = virtual_constraint(cfg, k);
  const double q = dual_exponent(cfg.p);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.momentum, k);
  TrainResult<Real> out{std::move(init), {}};
  auto& w = out.params.values;
  const std::size_t n_rows = data.train.size();
  const CounterRng base(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = base.split(epoch).permutation(n_rows);
    const bool robust = cfg.variant != AcrtVariant::baseline && epoch >= cfg.warmup_epochs;
    double loss_sum = 0.0, obj_sum = 0.0, fo_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_rows; start += cfg.batch_size, ++batches) {
      const std::size_t len = std::min(cfg.batch_size, n_rows - start);
      const auto batch = select_rows(data.train, std::span<const std::size_t>(order).subspan(start, len));
      const std::span<const Real> ws(w);
      AcrtStep s;
      try {
        if (!robust || cfg.epsilon == 0.0) {
          s = detail::plain_step(eval_grad(model, ws, batch));
        } else if (cfg.variant == AcrtVariant::direct_lstar) {
          s = acrt_loss_direct(model, ws, batch, *cfg.alpha, c);
        } else {
          s = grad_reg_step(model, ws, batch, *cfg.lambda, q, cfg.hvp_delta);
          if (*cfg.lambda != 0.0) {
            const auto r = eval_grad(model, ws, batch);
            s.first_order = cfg.epsilon * lp_norm(std::span<const double>(top_n(std::span<const Real>(r.grad), c.n)), q);
          }
        }
      } catch (const NumericError& e) {
        throw DivergenceError("numeric overflow at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches) + ": " + e.what());
      }
      if (!(s.base_loss <= cfg.divergence_threshold) || !(s.loss <= cfg.divergence_threshold)) {
        throw DivergenceError("loss " + std::to_string(s.loss) + " exceeds " + std::to_string(cfg.divergence_threshold) +
                              " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      loss_sum += s.base_loss;
      obj_sum += s.loss;
      fo_sum += s.first_order;
      opt.step(w, s.grad);
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(batches);
    e.objective = obj_sum / static_cast<double>(batches);
    const auto metric = default_metric(model, std::span<const Real>(w), data.eval);
    e.eval_metric = metric.value;
    e.metric_name = metric.name;
    if (robust) e.mean_first_order = fo_sum / static_cast<double>(batches);
    if (on_epoch) on_epoch(e);
    out.log.push_back(std::move(e));
  }
  return out;
}

template <class Real>
TrainResult<Real> train(const ModelSpec& spec, const Dataset<Real>& data, const AcrtConfig& cfg,
                        const std::function<void(const EpochLog&)>& on_epoch = {}) {
  auto built = build_model<Real>(spec);
  return train(*built.model, std::move(built.params), data, cfg, on_epoch);
}

// Mean over minibatches (in row order) of the first-order corruption effect
// eps * ||top_n(g_B)||_q. Used to compare how sharp trained points are.
template <class Real>
double mean_first_order(const Model<Real>& model, std::span<const Real> params, const Batch<Real>& data,
                        double p, double epsilon, std::size_t n, std::size_t batch_size) {
  const std::size_t rows = data.size();
  std::vector<std::size_t> order(rows);
  for (std::size_t i = 0; i < rows; ++i) order[i] = i;
  const double q = dual_exponent(p);
  double sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < rows; start += batch_size, ++batches) {
    const std::size_t len = std::min(batch_size, rows - start);
    const auto batch = select_rows(data, std::span<const std::size_t>(order).subspan(start, len));
    const auto r = eval_grad(model, params, batch);
    const std::size_t nn = n == 0 ? params.size() : std::min(n, params.size());
    sum += epsilon * lp_norm(std::span<const double>(top_n(std::span<const Real>(r.grad), nn)), q);
  }
  return sum / static_cast<double>(batches);
}

struct RobustnessRow {
  double epsilon = 0.0;
  double metric_baseline = 0.0;
  double metric_acrt = 0.0;
};

// Post-corruption metric on `eval` for two parameter sets. Each set gets its
// own gradient corruption (p, n over all parameters, n = 0 meaning k) built
// from the gradient on `grad_data`. The epsilon = 0 row is uncorrupted.
template <class Real>
std::vector<RobustnessRow> robustness_table(const Model<Real>& model, std::span<const Real> params_baseline,
                                            std::span<const Real> params_acrt, const Batch<Real>& grad_data,
                                            const Batch<Real>& eval, const std::vector<double>& eps_list, double p,
                                            std::size_t n = 0) {
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] >= 0.0)) throw ValidationError("epsilon values must be >= 0");
    if (i > 0 && !(eps_list[i] > eps_list[i - 1])) throw ValidationError("epsilon values must be strictly increasing");
  }
  const std::size_t k = model.param_count();
  if (params_baseline.size() != k || params_acrt.size() != k)
    throw IncompatibleParamsError("parameter sets do not fit the model");
  const std::size_t nn = n == 0 ? k : std::min(n, k);
  auto corrupted_metric = [&](std::span<const Real> w, const std::vector<Real>& g, double eps) {
    if (eps == 0.0) return default_metric(model, w, eval).value;
    const CorruptionConstraint c{p, eps, nn, full_mask(k)};
    bool any = false;
    for (auto x : g) any = any || x != Real(0);
    if (!any) return default_metric(model, w, eval).value;
    const auto a = gradient_corruption(std::span<const Real>(g), c);
    const auto shifted = apply_corruption(w, a);
    return default_metric(model, std::span<const Real>(shifted), eval).value;
  };
  const auto gb = eval_grad(model, params_baseline, grad_data).grad;
  const auto ga = eval_grad(model, params_acrt, grad_data).grad;
  std::vector<RobustnessRow> rows;
  for (double eps : eps_list)
    rows.push_back({eps, corrupted_metric(params_baseline, gb, eps), corrupted_metric(params_acrt, ga, eps)});
  return rows;
}

}  // namespace pcorrupt
