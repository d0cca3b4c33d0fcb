#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nanoct/image.hpp"

namespace nanoct {

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel, row-major

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &pixels[3 * (static_cast<std::size_t>(y) * width + x)];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

/// Gray image to RGB: normalized to [min, max] or clamped to [0, 255].
RgbImage to_rgb(const Image& image, bool normalize);

std::string encode_png(const ImageT<std::uint8_t>& gray);
std::string encode_png(const RgbImage& rgb);

}  // namespace nanoct
