#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "laneseg/datapipe.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/loss.hpp"
#include "laneseg/network.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

namespace detail {

// shortest round-trip decimal form; keeps CSV output byte-stable
inline std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace detail

// Mean over all channel-pixels of the squared difference.
inline double mse(const RgbImage& pred, const RgbImage& truth) {
  if (pred.h != truth.h || pred.w != truth.w) {
    throw DimensionError("mse: image shapes differ (" + std::to_string(pred.h) + "x" +
                         std::to_string(pred.w) + " vs " + std::to_string(truth.h) + "x" +
                         std::to_string(truth.w) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const double d = static_cast<double>(truth.pixels[i]) - static_cast<double>(pred.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.pixels.size());
}

// Mean absolute channel-pixel difference.
inline double mae(const RgbImage& pred, const RgbImage& truth) {
  if (pred.h != truth.h || pred.w != truth.w) {
    throw DimensionError("mae: image shapes differ (" + std::to_string(pred.h) + "x" +
                         std::to_string(pred.w) + " vs " + std::to_string(truth.h) + "x" +
                         std::to_string(truth.w) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    acc += std::abs(static_cast<double>(truth.pixels[i]) - static_cast<double>(pred.pixels[i]));
  }
  return acc / static_cast<double>(pred.pixels.size());
}

// Score channels rendered as a color image; values clamp to [0, 255], never
// wrap.
inline RgbImage render_scores(const Tensor<float>& scores, int batch_index) {
  if (scores.c != 3) {
    throw DimensionError("render_scores: expected 3 score channels, got " +
                         std::to_string(scores.c));
  }
  RgbImage img(scores.h, scores.w);
  for (int y = 0; y < scores.h; ++y) {
    for (int x = 0; x < scores.w; ++x) {
      std::uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c) {
        // clamp before rounding so non-finite scores map to 0 deterministically
        double v = static_cast<double>(scores.at(batch_index, c, y, x));
        v = v >= 0.0 ? (v <= 255.0 ? v : 255.0) : 0.0;
        p[c] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return img;
}

// Hard class map: nearest class color per pixel.
inline LabelImage classify_scores(const Tensor<float>& scores, int batch_index) {
  if (scores.c != 3) {
    throw DimensionError("classify_scores: expected 3 score channels, got " +
                         std::to_string(scores.c));
  }
  LabelImage out(scores.h, scores.w);
  for (int y = 0; y < scores.h; ++y) {
    for (int x = 0; x < scores.w; ++x) {
      out.at(y, x) = static_cast<std::uint8_t>(
          nearest_class(scores.at(batch_index, 0, y, x), scores.at(batch_index, 1, y, x),
                        scores.at(batch_index, 2, y, x)));
    }
  }
  return out;
}

struct EvalSample {
  std::string id;
  RgbImage image;
  LabelImage labels;
};

struct PerImageStats {
  std::string id;
  double mse = 0.0;
  double mae = 0.0;
};

struct EvalReport {
  double mse = 0.0;
  double mae = 0.0;
  std::vector<PerImageStats> per_image;
};

// Renders model scores for every sample and reports color-space MSE/MAE per
// image plus the pixel-weighted aggregate.
inline EvalReport evaluate(const ModelParams<float>& model,
                           const std::vector<EvalSample>& dataset) {
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  EvalReport report;
  double sq_sum = 0.0, abs_sum = 0.0;
  std::size_t total = 0;
  for (const EvalSample& s : dataset) {
    Tensor<float> scores = model_forward(image_to_tensor(s.image), model, /*training=*/false);
    const RgbImage rendered = render_scores(scores, 0);
    const RgbImage truth = encode_label_colors(s.labels);
    PerImageStats st{s.id, mse(rendered, truth), mae(rendered, truth)};
    const auto count = static_cast<double>(rendered.pixels.size());
    sq_sum += st.mse * count;
    abs_sum += st.mae * count;
    total += rendered.pixels.size();
    report.per_image.push_back(std::move(st));
  }
  report.mse = sq_sum / static_cast<double>(total);
  report.mae = abs_sum / static_cast<double>(total);
  return report;
}

// CSV rows `id,mse,mae` plus an ALL aggregate row.
inline void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report: " + path);
  out << "id,mse,mae\n";
  for (const auto& st : report.per_image) {
    out << st.id << ',' << detail::fmt_double(st.mse) << ',' << detail::fmt_double(st.mae)
        << '\n';
  }
  out << "ALL," << detail::fmt_double(report.mse) << ',' << detail::fmt_double(report.mae)
      << '\n';
}

// input | truth | prediction side by side
inline RgbImage triptych(const RgbImage& input, const RgbImage& truth, const RgbImage& pred) {
  if (input.h != truth.h || input.h != pred.h || input.w != truth.w || input.w != pred.w) {
    throw DimensionError("triptych: image shapes differ");
  }
  RgbImage out(input.h, input.w * 3);
  for (int y = 0; y < input.h; ++y) {
    std::copy_n(input.px(y, 0), static_cast<std::size_t>(input.w) * 3, out.px(y, 0));
    std::copy_n(truth.px(y, 0), static_cast<std::size_t>(input.w) * 3, out.px(y, input.w));
    std::copy_n(pred.px(y, 0), static_cast<std::size_t>(input.w) * 3, out.px(y, 2 * input.w));
  }
  return out;
}

}  // namespace laneseg
