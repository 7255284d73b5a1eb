#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pcorrupt/error.hpp"
#include "pcorrupt/tensor.hpp"

namespace pcorrupt {

enum class ParamKind {
  embedding,
  fully_connected,
  convolution,
  normalization_scale,
  normalization_bias,
  bias,
  other
};

inline std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::embedding: return "embedding";
    case ParamKind::fully_connected: return "fully-connected";
    case ParamKind::convolution: return "convolution";
    case ParamKind::normalization_scale: return "normalization-scale";
    case ParamKind::normalization_bias: return "normalization-bias";
    case ParamKind::bias: return "bias";
    case ParamKind::other: return "other";
  }
  return "other";
}

inline ParamKind param_kind_from_string(std::string_view s) {
  for (auto k : {ParamKind::embedding, ParamKind::fully_connected, ParamKind::convolution,
                 ParamKind::normalization_scale, ParamKind::normalization_bias, ParamKind::bias,
                 ParamKind::other}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown parameter kind '" + std::string(s) + "'");
}

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  ParamKind kind = ParamKind::other;
  int layer_index = 0;
  Shape shape;

  friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

// Checks that groups tile [0, k) in order, without overlap or gap.
inline void validate_groups(const std::vector<ParamGroup>& groups, std::size_t k) {
  std::size_t next = 0;
  for (const auto& g : groups) {
    if (g.offset != next) {
      throw ValidationError("parameter group '" + g.name + "' starts at " + std::to_string(g.offset) +
                            ", expected " + std::to_string(next));
    }
    if (g.length == 0) throw ValidationError("parameter group '" + g.name + "' is empty");
    if (!g.shape.empty() && shape_volume(g.shape) != g.length) {
      throw ValidationError("parameter group '" + g.name + "' shape does not match its length");
    }
    next += g.length;
  }
  if (next != k) {
    throw ValidationError("parameter groups cover " + std::to_string(next) + " of " + std::to_string(k) +
                          " parameters");
  }
}

// Flat trainable-parameter vector plus the table of named groups over it.
template <class Real>
struct FlatParams {
  std::vector<Real> values;
  std::vector<ParamGroup> groups;

  std::size_t size() const { return values.size(); }

  const ParamGroup& group(std::string_view name) const {
    for (const auto& g : groups) {
      if (g.name == name) return g;
    }
    throw ValidationError("no parameter group named '" + std::string(name) + "'");
  }

  friend bool operator==(const FlatParams&, const FlatParams&) = default;
};

template <class To, class From>
FlatParams<To> convert_params(const FlatParams<From>& in) {
  FlatParams<To> out;
  out.groups = in.groups;
  out.values.reserve(in.values.size());
  for (auto v : in.values) out.values.push_back(static_cast<To>(v));
  return out;
}

enum class GroupAxis { kind, layer };

inline std::string_view to_string(GroupAxis axis) { return axis == GroupAxis::kind ? "kind" : "layer"; }

inline GroupAxis group_axis_from_string(std::string_view s) {
  if (s == "kind") return GroupAxis::kind;
  if (s == "layer") return GroupAxis::layer;
  throw ValidationError("unknown group axis '" + std::string(s) + "' (expected kind|layer)");
}

struct GroupMask {
  std::string label;
  std::vector<std::size_t> indices;  // sorted ascending
};

// Partition of all parameter indices by kind (labels sorted lexicographically)
// or by layer (labels "layer<i>" sorted by i).
template <class Real>
std::vector<GroupMask> param_groups_by(const FlatParams<Real>& params, GroupAxis axis) {
  std::vector<GroupMask> out;
  if (axis == GroupAxis::kind) {
    std::map<std::string, std::vector<std::size_t>> by_kind;
    for (const auto& g : params.groups) {
      auto& idx = by_kind[std::string(to_string(g.kind))];
      for (std::size_t i = 0; i < g.length; ++i) idx.push_back(g.offset + i);
    }
    for (auto& [label, idx] : by_kind) out.push_back({label, std::move(idx)});
  } else {
    std::map<int, std::vector<std::size_t>> by_layer;
    for (const auto& g : params.groups) {
      auto& idx = by_layer[g.layer_index];
      for (std::size_t i = 0; i < g.length; ++i) idx.push_back(g.offset + i);
    }
    for (auto& [layer, idx] : by_layer) out.push_back({"layer" + std::to_string(layer), std::move(idx)});
  }
  for (auto& m : out) std::sort(m.indices.begin(), m.indices.end());
  return out;
}

}  // namespace pcorrupt
