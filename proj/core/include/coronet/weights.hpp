#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "coronet/network.hpp"

namespace coronet::model {

// Weights container, all integers little-endian:
//   "CORONET1"
//   u32 entry count
//   per entry: u32 len + layer name, u32 len + tensor name, u32 rank,
//              rank x u64 extents, u8 trainable
//   per entry, in manifest order: raw float32 values
struct WeightEntry {
  std::string layer;
  std::string tensor;
  Shape shape;
  bool trainable = true;
};

enum class WeightScope { all, backbone };

void save_weights(const Network& net, const std::filesystem::path& path,
                  WeightScope scope = WeightScope::all);

std::vector<WeightEntry> read_weight_manifest(const std::filesystem::path& path);

/// Populates the layers named in the file; layers absent from the file keep
/// their current values. The whole file is validated before anything is
/// written, and a FormatError names the first layer that does not match.
/// Returns the number of tensors loaded.
std::size_t load_weights(Network& net, const std::filesystem::path& path);

}  // namespace coronet::model
