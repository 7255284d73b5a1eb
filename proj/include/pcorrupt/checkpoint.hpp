#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcorrupt/data.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/zoo.hpp"

namespace pcorrupt {

// File layout: one JSON header line, '\n', then param_count little-endian
// IEEE-754 binary32 values.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  FlatParams<float> params;
};

inline nlohmann::json group_table_json(const std::vector<ParamGroup>& groups) {
  auto arr = nlohmann::json::array();
  for (const auto& g : groups) {
    arr.push_back({{"name", g.name},
                   {"offset", g.offset},
                   {"length", g.length},
                   {"kind", to_string(g.kind)},
                   {"layer_index", g.layer_index},
                   {"shape", g.shape}});
  }
  return arr;
}

inline std::vector<ParamGroup> group_table_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw FormatError("checkpoint schema mismatch: param_group_table is not an array");
  std::vector<ParamGroup> out;
  for (const auto& e : arr) {
    try {
      ParamGroup g;
      g.name = e.at("name").get<std::string>();
      g.offset = e.at("offset").get<std::size_t>();
      g.length = e.at("length").get<std::size_t>();
      g.kind = param_kind_from_string(e.at("kind").get<std::string>());
      g.layer_index = e.at("layer_index").get<int>();
      g.shape = e.value("shape", Shape{});
      out.push_back(std::move(g));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("checkpoint schema mismatch: param_group_table entry: ") + ex.what());
    } catch (const ValidationError& ex) {
      throw FormatError(std::string("checkpoint schema mismatch: param_group_table entry: ") + ex.what());
    }
  }
  return out;
}

inline nlohmann::json checkpoint_header(const ModelSpec& spec, const FlatParams<float>& params) {
  return {{"format_version", kCheckpointVersion},
          {"model_spec", spec},
          {"param_group_table", group_table_json(params.groups)},
          {"dtype", "f32"},
          {"byte_order", "little-endian"},
          {"param_count", params.size()}};
}

inline void save_checkpoint(const std::string& path, const ModelSpec& spec, const FlatParams<float>& params) {
  spec.validate();
  const Network<float> net(spec);
  if (params.size() != net.param_count())
    throw IncompatibleParamsError("parameter count " + std::to_string(params.size()) + " does not match model (" +
                                  std::to_string(net.param_count()) + ")");
  std::string blob = checkpoint_header(spec, params).dump();
  blob.push_back('\n');
  const std::size_t head = blob.size();
  blob.resize(head + 4 * params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(params.values[i]);
    for (int b = 0; b < 4; ++b) blob[head + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

template <class Real>
void save_checkpoint(const std::string& path, const ModelSpec& spec, const FlatParams<Real>& params) {
  save_checkpoint(path, spec, convert_params<float>(params));
}

namespace detail {

inline const nlohmann::json& header_field(const nlohmann::json& h, const char* name) {
  if (!h.contains(name)) throw FormatError(std::string("checkpoint schema mismatch: missing field '") + name + "'");
  return h.at(name);
}

// Parses and validates a header line. Returns the spec and expected count.
inline std::pair<Checkpoint, std::size_t> parse_header(const std::string& line) {
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + ex.what());
  }
  if (!h.is_object()) throw FormatError("checkpoint schema mismatch: header is not an object");
  const auto& ver = header_field(h, "format_version");
  if (!ver.is_number_integer()) throw FormatError("checkpoint schema mismatch: field 'format_version' is not an integer");
  if (ver.get<long long>() != kCheckpointVersion)
    throw FormatError("unsupported checkpoint format_version " + ver.dump() + " (supported: 1)");
  const auto& dtype = header_field(h, "dtype");
  if (dtype != "f32") throw FormatError("checkpoint schema mismatch: field 'dtype' is " + dtype.dump() + ", expected \"f32\"");
  const auto& order = header_field(h, "byte_order");
  if (order != "little-endian")
    throw FormatError("checkpoint schema mismatch: field 'byte_order' is " + order.dump() + ", expected \"little-endian\"");
  const auto& count = header_field(h, "param_count");
  if (!count.is_number_unsigned()) throw FormatError("checkpoint schema mismatch: field 'param_count' is not a count");
  Checkpoint ck;
  try {
    ck.spec = header_field(h, "model_spec").get<ModelSpec>();
    ck.spec.validate();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("checkpoint schema mismatch: field 'model_spec': ") + ex.what());
  } catch (const ValidationError& ex) {
    throw FormatError(std::string("checkpoint schema mismatch: field 'model_spec': ") + ex.what());
  }
  ck.params.groups = group_table_from_json(header_field(h, "param_group_table"));
  const std::size_t k = count.get<std::size_t>();
  const Network<float> net(ck.spec);
  if (k != net.param_count())
    throw FormatError("checkpoint schema mismatch: field 'param_count' is " + std::to_string(k) +
                      " but model_spec implies " + std::to_string(net.param_count()));
  if (ck.params.groups != net.param_layout())
    throw FormatError("checkpoint schema mismatch: field 'param_group_table' does not match model_spec");
  return {std::move(ck), k};
}

}  // namespace detail

inline Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t nl = 0;
  while (nl < bytes.size() && bytes[nl] != '\n') ++nl;
  if (nl == bytes.size()) throw FormatError(path + ": checkpoint header line is not terminated");
  auto [ck, k] = detail::parse_header(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(nl)));
  const std::size_t head = nl + 1;
  const std::size_t need = 4 * k;
  const std::size_t have = bytes.size() - head;
  if (have < need)
    throw FormatError(path + ": truncated payload: expected " + std::to_string(need) + " bytes, found " +
                      std::to_string(have));
  if (have > need)
    throw FormatError(path + ": " + std::to_string(have - need) + " trailing bytes after payload of " +
                      std::to_string(need) + " bytes");
  ck.params.values.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[head + 4 * i + b]} << (8 * b);
    ck.params.values[i] = std::bit_cast<float>(bits);
  }
  return ck;
}

// Header plus payload summary for `checkpoint inspect`.
inline nlohmann::json inspect_checkpoint(const std::string& path) {
  const auto ck = load_checkpoint(path);
  auto j = checkpoint_header(ck.spec, ck.params);
  double l2 = 0.0;
  bool finite = true;
  for (float v : ck.params.values) {
    l2 += static_cast<double>(v) * static_cast<double>(v);
    finite = finite && std::isfinite(v);
  }
  j["payload"] = {{"bytes", 4 * ck.params.size()}, {"l2_norm", std::sqrt(l2)}, {"all_finite", finite}};
  return j;
}

}  // namespace pcorrupt
