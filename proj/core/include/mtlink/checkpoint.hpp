#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtlink/config.hpp"
#include "mtlink/tensor.hpp"

namespace mtlink {

/// Versioned binary container: magic "MTLK", format version, a config text
/// blob, and a named tensor table (shape + raw little-endian 64-bit floats).
/// Doubles are written bit-exactly, so save/load round-trips are lossless.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  KvConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(const std::string& name, const Tensor& t) { tensors.push_back({name, t.detach()}); }
  void put_scalar(const std::string& name, double v) {
    tensors.push_back({name, Tensor::scalar(v)});
  }
  const Tensor* find(const std::string& name) const;
  double scalar(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace mtlink
