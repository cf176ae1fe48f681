#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/rng.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

// Raw simulator class tags carried in the red channel of label frames.
struct TagMap {
  std::uint8_t road_tag = 7;
  std::uint8_t vehicle_tag = 10;
};

constexpr std::array<std::array<std::uint8_t, 3>, 3> kClassColors = {{
    {0, 0, 0},      // background
    {0, 255, 0},    // road
    {0, 0, 255},    // vehicle
}};

// int24 depth decode: v = R + 256*G + 65536*B, meters = far * v / (2^24 - 1).
inline DepthImage decode_depth(const RgbImage& img, float far_plane = 1000.0f) {
  DepthImage d(img.h, img.w, far_plane);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* p = img.px(y, x);
      const std::uint32_t v = static_cast<std::uint32_t>(p[0]) +
                              256u * static_cast<std::uint32_t>(p[1]) +
                              65536u * static_cast<std::uint32_t>(p[2]);
      d.meters[static_cast<std::size_t>(y) * img.w + x] =
          static_cast<float>(static_cast<double>(far_plane) * v / 16777215.0);
    }
  }
  return d;
}

// Positional int24 re-encode: b = v / 65536, g = (v - 65536 b) / 256,
// r = v mod 256.
inline RgbImage encode_depth(const DepthImage& d) {
  RgbImage img(d.h, d.w);
  for (int y = 0; y < d.h; ++y) {
    for (int x = 0; x < d.w; ++x) {
      const double norm = static_cast<double>(d.at(y, x)) / static_cast<double>(d.far_plane);
      const std::uint32_t v = static_cast<std::uint32_t>(
          std::lround(std::clamp(norm, 0.0, 1.0) * 16777215.0));
      std::uint8_t* p = img.px(y, x);
      p[2] = static_cast<std::uint8_t>(v / 65536u);
      p[1] = static_cast<std::uint8_t>((v / 256u) % 256u);
      p[0] = static_cast<std::uint8_t>(v % 256u);
    }
  }
  return img;
}

// Red-channel tag decode: road_tag -> road, vehicle_tag -> vehicle,
// everything else -> background.
inline LabelImage decode_labels(const RgbImage& img, const TagMap& tags) {
  if (tags.road_tag == tags.vehicle_tag) {
    throw ConfigError("decode_labels: road and vehicle tags must differ");
  }
  LabelImage out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t red = img.px(y, x)[0];
      if (red == tags.road_tag) {
        out.at(y, x) = LabelImage::kRoad;
      } else if (red == tags.vehicle_tag) {
        out.at(y, x) = LabelImage::kVehicle;
      }
    }
  }
  return out;
}

inline RgbImage encode_label_colors(const LabelImage& labels) {
  RgbImage img(labels.h, labels.w);
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      const auto& color = kClassColors[labels.at(y, x)];
      std::uint8_t* p = img.px(y, x);
      p[0] = color[0];
      p[1] = color[1];
      p[2] = color[2];
    }
  }
  return img;
}

inline LabelImage decode_label_colors(const RgbImage& img) {
  LabelImage out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* p = img.px(y, x);
      int cls = -1;
      for (int k = 0; k < LabelImage::kClasses; ++k) {
        if (p[0] == kClassColors[k][0] && p[1] == kClassColors[k][1] &&
            p[2] == kClassColors[k][2]) {
          cls = k;
          break;
        }
      }
      if (cls < 0) {
        throw DataError("decode_label_colors: pixel (" + std::to_string(y) + ", " +
                        std::to_string(x) + ") has non-class color (" + std::to_string(p[0]) +
                        ", " + std::to_string(p[1]) + ", " + std::to_string(p[2]) + ")");
      }
      out.at(y, x) = static_cast<std::uint8_t>(cls);
    }
  }
  return out;
}

namespace detail {

inline void check_crop(int h, int top, int bottom) {
  if (top < 0 || bottom < 0 || top + bottom >= h) {
    throw DimensionError("crop: budgets " + std::to_string(top) + "+" + std::to_string(bottom) +
                         " leave no rows of " + std::to_string(h));
  }
}

}  // namespace detail

// Removes top_rows from the top and bottom_rows from the bottom.
inline RgbImage crop(const RgbImage& img, int top_rows, int bottom_rows) {
  detail::check_crop(img.h, top_rows, bottom_rows);
  RgbImage out(img.h - top_rows - bottom_rows, img.w);
  std::copy_n(img.px(top_rows, 0), static_cast<std::size_t>(out.h) * out.w * 3, out.px(0, 0));
  return out;
}

inline LabelImage crop(const LabelImage& img, int top_rows, int bottom_rows) {
  detail::check_crop(img.h, top_rows, bottom_rows);
  LabelImage out(img.h - top_rows - bottom_rows, img.w);
  std::copy_n(&img.classes[static_cast<std::size_t>(top_rows) * img.w],
              static_cast<std::size_t>(out.h) * out.w, out.classes.data());
  return out;
}

// Rotation about the image center. The image is resampled bilinearly, labels
// nearest-neighbor so class ids stay valid; out-of-frame regions are black /
// background.
inline RgbImage rotate_image(const RgbImage& img, double angle_deg) {
  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
  RgbImage out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      // inverse map: source coords of this destination pixel
      const double dy = y - cy, dx = x - cx;
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - sn * dx + cs * dy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      std::uint8_t* dst = out.px(y, x);
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            const int yy = y0 + ky, xx = x0 + kx;
            if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) continue;
            const double wgt = (ky ? fy : 1.0 - fy) * (kx ? fx : 1.0 - fx);
            acc += wgt * img.px(yy, xx)[c];
          }
        }
        dst[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0l, 255l));
      }
    }
  }
  return out;
}

inline LabelImage rotate_labels(const LabelImage& labels, double angle_deg) {
  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (labels.h - 1) / 2.0, cx = (labels.w - 1) / 2.0;
  LabelImage out(labels.h, labels.w);
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      const double dy = y - cy, dx = x - cx;
      const int sx = static_cast<int>(std::lround(cx + cs * dx + sn * dy));
      const int sy = static_cast<int>(std::lround(cy - sn * dx + cs * dy));
      if (sy >= 0 && sy < labels.h && sx >= 0 && sx < labels.w) {
        out.at(y, x) = labels.at(sy, sx);
      }
    }
  }
  return out;
}

inline std::pair<RgbImage, LabelImage> rotate_aug(const RgbImage& img, const LabelImage& labels,
                                                  double deg_lo, double deg_hi, Rng& rng) {
  const double angle = rng.uniform(deg_lo, deg_hi);
  if (angle == 0.0) return {img, labels};
  return {rotate_image(img, angle), rotate_labels(labels, angle)};
}

// Integer-pixel translation right/down; vacated regions become black /
// background. Image and labels move by the same offset.
inline std::pair<RgbImage, LabelImage> shift_images(const RgbImage& img, const LabelImage& labels,
                                                    int dx, int dy) {
  RgbImage oimg(img.h, img.w);
  LabelImage olab(labels.h, labels.w);
  for (int y = 0; y < img.h; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= img.h) continue;
    for (int x = 0; x < img.w; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= img.w) continue;
      const std::uint8_t* s = img.px(sy, sx);
      std::uint8_t* d = oimg.px(y, x);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
      olab.at(y, x) = labels.at(sy, sx);
    }
  }
  return {std::move(oimg), std::move(olab)};
}

inline std::pair<RgbImage, LabelImage> shift_aug(const RgbImage& img, const LabelImage& labels,
                                                 double w_lo, double w_hi, double h_lo,
                                                 double h_hi, Rng& rng) {
  const int dx = static_cast<int>(std::lround(rng.uniform(w_lo, w_hi) * img.w));
  const int dy = static_cast<int>(std::lround(rng.uniform(h_lo, h_hi) * img.h));
  if (dx == 0 && dy == 0) return {img, labels};
  return {shift_images(img, labels, dx, dy)};
}

// Seeded shuffle then contiguous split: floor(n*r0) train, floor(n*r1) val,
// remainder test.
template <typename T>
std::tuple<std::vector<T>, std::vector<T>, std::vector<T>> split_dataset(
    std::vector<T> items, const std::array<double, 3>& ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw ConfigError("split_dataset: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split_dataset: ratios must sum to 1, got " + std::to_string(sum));
  }
  Rng rng(seed);
  rng.shuffle(items.begin(), items.end());
  const std::size_t n = items.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(ratios[0] * n));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * n));
  std::vector<T> train(items.begin(), items.begin() + n_train);
  std::vector<T> val(items.begin() + n_train, items.begin() + n_train + n_val);
  std::vector<T> test(items.begin() + n_train + n_val, items.end());
  return {std::move(train), std::move(val), std::move(test)};
}

// Dataset manifest: one `input_path<TAB>label_path` pair per line. Relative
// paths resolve against the manifest's directory.
struct ManifestEntry {
  std::string input;
  std::string label;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": manifest line is not `input<TAB>label`");
    }
    auto resolve = [&](std::string p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    entries.push_back({resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
  }
  return entries;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path);
  for (const auto& e : entries) {
    out << e.input << '\t' << e.label << '\n';
  }
}

// Network input: channels scaled to [0, 1].
inline void image_into_tensor(const RgbImage& img, Tensor<float>& t, int batch_index) {
  for (int c = 0; c < 3; ++c) {
    float* dst = &t.data[t.idx(batch_index, c, 0, 0)];
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        dst[static_cast<std::size_t>(y) * img.w + x] =
            static_cast<float>(img.px(y, x)[c]) / 255.0f;
      }
    }
  }
}

inline Tensor<float> image_to_tensor(const RgbImage& img) {
  Tensor<float> t(1, 3, img.h, img.w);
  image_into_tensor(img, t, 0);
  return t;
}

// Regression target: the class color channels at intensity scale (0 or 255).
inline void label_into_target(const LabelImage& labels, Tensor<float>& t, int batch_index) {
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      const auto& color = kClassColors[labels.at(y, x)];
      for (int c = 0; c < 3; ++c) {
        t.at(batch_index, c, y, x) = static_cast<float>(color[c]);
      }
    }
  }
}

inline Tensor<float> label_to_target(const LabelImage& labels) {
  Tensor<float> t(1, 3, labels.h, labels.w);
  label_into_target(labels, t, 0);
  return t;
}

}  // namespace laneseg
