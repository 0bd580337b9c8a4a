// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gazessl/visual_geometry.hpp"

namespace gazessl {

/// 8-bit interleaved RGB image. Pixel values map to [0, 1] as v / 255.
class Image {
 public:
  Image() = default;
  Image(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t* at(int x, int y) { return &pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3];
  }
  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

Image crop(const Image& src, const CropWindow& w);

/// Bilinear resampling with pixel-centre alignment.
Image resize_bilinear(const Image& src, int width, int height);

/// Appends the image as planar CHW floats in [0, 1].
void append_chw(const Image& img, std::vector<float>& out);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace gazessl
