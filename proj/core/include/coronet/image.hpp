#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coronet/tensor.hpp"

namespace coronet::data {

/// Binary PGM (P5) or PPM (P6) with maxval 255 -> [H, W, 3] in [0, 1].
/// Grayscale is replicated across the three channels.
Tensor decode_image(std::span<const std::uint8_t> bytes);

Tensor load_image(const std::filesystem::path& path);

/// P5 encoding of an 8-bit grayscale raster (row-major, height x width).
std::vector<std::uint8_t> encode_pgm(std::span<const std::uint8_t> gray, std::size_t height,
                                     std::size_t width);

/// Bilinear resampling of [H, W, C] with half-pixel centres and edge clamping.
Tensor resize_bilinear(const Tensor& pixels, std::size_t target_h, std::size_t target_w);

}  // namespace coronet::data
