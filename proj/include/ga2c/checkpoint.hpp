#pragma once

// Self-describing JSON checkpoint container: named tensors with shapes plus
// a free-form metadata block. Doubles are serialized by nlohmann/json with
// shortest-round-trip formatting, so finite values survive bit-exactly.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ga2c/common.hpp"
#include "ga2c/io_util.hpp"
#include "ga2c/tensor.hpp"

namespace ga2c {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::string kind;  // "victim" | "policy" | ...
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw ValidationError("checkpoint has no tensor named '" + name + "'");
  }
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = ckpt.kind;
  j["meta"] = ckpt.meta;
  auto arr = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    nlohmann::json tj;
    tj["name"] = name;
    tj["shape"] = t.shape();
    tj["values"] = t.values();
    arr.push_back(std::move(tj));
  }
  j["tensors"] = std::move(arr);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointFormatVersion)
    throw ValidationError("unsupported checkpoint format version");
  Checkpoint ckpt;
  ckpt.kind = j.value("kind", std::string{});
  ckpt.meta = j.value("meta", nlohmann::json::object());
  for (const auto& tj : j.at("tensors")) {
    Shape shape = tj.at("shape").get<Shape>();
    std::vector<double> values = tj.at("values").get<std::vector<double>>();
    ckpt.tensors.emplace_back(tj.at("name").get<std::string>(),
                              Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_atomic(path, checkpoint_to_json(ckpt).dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace ga2c
