#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pcorrupt/corruption.hpp"
#include "pcorrupt/engine.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/zoo.hpp"

namespace pcorrupt {

struct ScanCell {
  std::string group_label;
  double epsilon = 0.0;
  double metric_before = 0.0;
  double metric_after = 0.0;
  double delta_loss = 0.0;
  double first_order = 0.0;
  bool degenerate = false;            // zero gradient on the group; nothing corrupted
  std::vector<std::size_t> touched;   // corrupted indices (in memory only)
};

struct ScanReport {
  GroupAxis axis = GroupAxis::kind;
  double p = 2.0;
  std::size_t n = 0;  // 0: whole group
  std::string metric_name;
  std::vector<ScanCell> cells;
};

// Per-group gradient corruption. For each group the constraint mask is the
// group's indices and n is min(n, group size) (n = 0: group size). The
// corruption comes from the gradient on `grad_data`; delta_loss is measured on
// `grad_data` and the metric on `eval`. Corruptions are applied in place and
// the touched coordinates restored from saved copies after each cell.
template <class Real>
ScanReport scan(const Model<Real>& model, FlatParams<Real>& params, const Batch<Real>& grad_data,
                const Batch<Real>& eval, GroupAxis axis, const std::vector<double>& eps_list, double p,
                std::size_t n = 0) {
  if (params.groups.empty()) throw ValidationError("scan needs at least one parameter group");
  if (eps_list.empty()) throw ValidationError("scan needs at least one epsilon");
  for (double e : eps_list)
    if (!(e > 0.0) || std::isinf(e)) throw ValidationError("scan epsilons must be positive and finite");
  if (!(p >= 1.0)) throw ValidationError("p must be >= 1");
  std::vector<Real>& w = params.values;
  const auto report = eval_grad(model, std::span<const Real>(w), grad_data);
  const double base_loss = static_cast<double>(report.loss);
  const auto before = default_metric(model, std::span<const Real>(w), eval);
  ScanReport out;
  out.axis = axis;
  out.p = p;
  out.n = n;
  out.metric_name = before.name;
  for (const auto& group : param_groups_by(params, axis)) {
    bool flat = true;
    for (auto i : group.indices) flat = flat && report.grad[i] == Real(0);
    const std::size_t ng = n == 0 ? group.indices.size() : std::min(n, group.indices.size());
    for (double eps : eps_list) {
      ScanCell cell;
      cell.group_label = group.label;
      cell.epsilon = eps;
      cell.metric_before = before.value;
      if (flat) {
        cell.degenerate = true;
        cell.metric_after = before.value;
        out.cells.push_back(std::move(cell));
        continue;
      }
      const CorruptionConstraint c{p, eps, ng, group.indices};
      const auto a = gradient_corruption(std::span<const Real>(report.grad), c);
      for (auto i : a.indices) {
        if (!std::binary_search(group.indices.begin(), group.indices.end(), i))
          throw Error("corruption escaped group '" + group.label + "' at index " + std::to_string(i));
      }
      std::vector<Real> saved(a.indices.size());
      for (std::size_t j = 0; j < a.indices.size(); ++j) {
        saved[j] = w[a.indices[j]];
        w[a.indices[j]] = static_cast<Real>(static_cast<double>(saved[j]) + a.values[j]);
      }
      try {
        cell.delta_loss = static_cast<double>(eval_loss(model, std::span<const Real>(w), grad_data)) - base_loss;
        cell.metric_after = default_metric(model, std::span<const Real>(w), eval).value;
      } catch (...) {
        for (std::size_t j = 0; j < a.indices.size(); ++j) w[a.indices[j]] = saved[j];
        throw;
      }
      for (std::size_t j = 0; j < a.indices.size(); ++j) w[a.indices[j]] = saved[j];
      cell.first_order = a.linear_value;
      cell.touched = a.indices;
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

}  // namespace pcorrupt
