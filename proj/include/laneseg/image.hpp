#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "laneseg/errors.hpp"

namespace laneseg {

// Interleaved 8-bit RGB image.
struct RgbImage {
  int h = 0, w = 0;
  std::vector<std::uint8_t> pixels;  // r, g, b per pixel, row-major

  RgbImage() = default;
  RgbImage(int h_, int w_) : h(h_), w(w_), pixels(static_cast<std::size_t>(h_) * w_ * 3, 0) {}

  std::uint8_t* px(int y, int x) { return &pixels[(static_cast<std::size_t>(y) * w + x) * 3]; }
  const std::uint8_t* px(int y, int x) const {
    return &pixels[(static_cast<std::size_t>(y) * w + x) * 3];
  }
};

// Per-pixel class ids: 0 background, 1 road, 2 vehicle.
struct LabelImage {
  static constexpr std::uint8_t kBackground = 0;
  static constexpr std::uint8_t kRoad = 1;
  static constexpr std::uint8_t kVehicle = 2;
  static constexpr int kClasses = 3;

  int h = 0, w = 0;
  std::vector<std::uint8_t> classes;

  LabelImage() = default;
  LabelImage(int h_, int w_)
      : h(h_), w(w_), classes(static_cast<std::size_t>(h_) * w_, kBackground) {}

  std::uint8_t& at(int y, int x) { return classes[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return classes[static_cast<std::size_t>(y) * w + x]; }
};

// Metric depth per pixel, decoded from the simulator's int24 encoding.
struct DepthImage {
  int h = 0, w = 0;
  std::vector<float> meters;
  float far_plane = 1000.0f;

  DepthImage() = default;
  DepthImage(int h_, int w_, float far)
      : h(h_), w(w_), meters(static_cast<std::size_t>(h_) * w_, 0.0f), far_plane(far) {}

  float at(int y, int x) const { return meters[static_cast<std::size_t>(y) * w + x]; }
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Reads any libpng-supported file and converts to 8-bit RGB (palette
// expanded, 16-bit stripped, alpha dropped, gray promoted).
inline RgbImage read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed reading " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed reading " + path);
  }

  RgbImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("not a valid PNG file: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG layout in " + path);
  }
  img = RgbImage(static_cast<int>(h), static_cast<int>(w));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(img.px(static_cast<int>(y), 0));
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::string& path, const RgbImage& img) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open file for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed writing " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed writing " + path);
  }

  std::vector<png_bytep> rows(img.h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y) {
    rows[y] = const_cast<png_bytep>(reinterpret_cast<const png_byte*>(img.px(y, 0)));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace laneseg
