#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iepg/nn.hpp"
#include "iepg/tensor.hpp"

namespace iepg {

// Binary container for named tensors plus run metadata.
// Layout (all integers little-endian):
//   magic "IEPG" | u32 version | u32 stage_len | stage | u64 seed
//   | u32 config_len | config json | u32 n_tensors
//   | per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | f64 data[]
struct Checkpoint {
  static constexpr char kMagic[4] = {'I', 'E', 'P', 'G'};
  static constexpr std::uint32_t kVersion = 1;

  std::string stage;       // "gec" or "pis"
  std::uint64_t seed = 0;
  std::string config_json; // echo of the run configuration
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(const ParamList& params);
  // copies stored payloads into matching destination tensors; throws on
  // missing names or shape mismatch
  void restore(const ParamList& params) const;
  const Tensor* find(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  // atomic: writes to <path>.tmp then renames
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);
std::uint64_t file_digest(const std::string& path);

}  // namespace iepg
