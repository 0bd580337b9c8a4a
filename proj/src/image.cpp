// SPDX-License-Identifier: Apache-2.0
#include "gazessl/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

namespace gazessl {

Image::Image(int width, int height, std::uint8_t fill)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * height * 3, fill) {
  if (width < 0 || height < 0) throw std::invalid_argument("Image: negative dimensions");
}

Image crop(const Image& src, const CropWindow& w) {
  if (w.x0 < 0 || w.y0 < 0 || w.x0 + w.size_px > src.width() || w.y0 + w.size_px > src.height()) {
    throw std::out_of_range("crop: window outside image");
  }
  Image out(w.size_px, w.size_px);
  for (int y = 0; y < w.size_px; ++y) {
    std::copy_n(src.at(w.x0, w.y0 + y), static_cast<std::size_t>(w.size_px) * 3, out.at(0, y));
  }
  return out;
}

Image resize_bilinear(const Image& src, int width, int height) {
  if (src.empty()) throw std::invalid_argument("resize_bilinear: empty image");
  if (width == src.width() && height == src.height()) return src;
  Image out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0)[c] * (1 - wx) + src.at(x1, y0)[c] * wx;
        const double bot = src.at(x0, y1)[c] * (1 - wx) + src.at(x1, y1)[c] * wx;
        out.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return out;
}

void append_chw(const Image& img, std::vector<float>& out) {
  const std::size_t plane = static_cast<std::size_t>(img.width()) * img.height();
  const std::size_t base = out.size();
  out.resize(base + plane * 3);
  const auto bytes = img.bytes();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      out[base + c * plane + i] = bytes[i * 3 + c] / 255.0f;
    }
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng: cannot allocate write structs");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng: error writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(img.at(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng: cannot allocate read structs");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng: error reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || color != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: expected 8-bit RGB in " + path.string());
  }
  img = Image(width, height);
  for (int y = 0; y < height; ++y) png_read_row(png, img.at(0, y), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace gazessl
