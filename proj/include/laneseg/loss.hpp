#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

// Per-batch class weights: raw_i = N / (2*c*n_i) clamped to [beta, alpha];
// classes absent from the batch get weight 1.
struct ClassWeights {
  std::vector<double> w;
  double beta = 0.1;
  double alpha = 10.0;
  std::vector<long long> counts;
  long long total = 0;
};

inline ClassWeights class_weights_from_counts(const std::vector<long long>& counts,
                                              double beta, double alpha) {
  if (counts.empty()) throw ConfigError("class_weights: class count must be positive");
  if (!(beta > 0.0) || !(beta < alpha)) {
    throw ConfigError("class_weights: need 0 < beta < alpha");
  }
  ClassWeights cw;
  cw.beta = beta;
  cw.alpha = alpha;
  cw.counts = counts;
  for (long long n : counts) cw.total += n;
  const double c = static_cast<double>(counts.size());
  cw.w.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      cw.w[i] = 1.0;
    } else {
      const double raw = static_cast<double>(cw.total) / (2.0 * c * static_cast<double>(counts[i]));
      cw.w[i] = std::clamp(raw, beta, alpha);
    }
  }
  return cw;
}

inline ClassWeights class_weights(std::span<const LabelImage> batch, double beta, double alpha,
                                  int c) {
  if (c <= 0) throw ConfigError("class_weights: class count must be positive");
  std::vector<long long> counts(static_cast<std::size_t>(c), 0);
  for (const LabelImage& img : batch) {
    for (std::uint8_t id : img.classes) {
      if (id >= c) {
        throw DataError("class_weights: label id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(c) + ")");
      }
      ++counts[id];
    }
  }
  return class_weights_from_counts(counts, beta, alpha);
}

// Class of a score/target triple by nearest class color; ties resolve
// background < road < vehicle. Equivalent to: road iff g is the strict max
// and g > 127.5, vehicle likewise for b.
inline int nearest_class(double r, double g, double b) {
  const double d_bg = r * r + g * g + b * b;
  const double d_road = r * r + (g - 255.0) * (g - 255.0) + b * b;
  const double d_veh = r * r + g * g + (b - 255.0) * (b - 255.0);
  int cls = 0;
  double best = d_bg;
  if (d_road < best) {
    best = d_road;
    cls = 1;
  }
  if (d_veh < best) {
    cls = 2;
  }
  return cls;
}

template <typename T>
struct WeightedLoss {
  double loss = 0.0;
  Tensor<T> grad;
};

// Squared-error loss weighted per pixel by the class weight of that pixel's
// true class, summed over channels and averaged over batch and pixels:
//   loss = (1 / (n*h*w)) * sum_{n,i,j} w_class(n,i,j) * |x_nij - y_nij|^2
// The pixel class is recovered from the target's color channels.
template <typename T>
WeightedLoss<T> weighted_loss(const Tensor<T>& pred, const Tensor<T>& target,
                              const ClassWeights& weights) {
  require_same_shape(pred, target, "weighted_loss");
  if (pred.c != 3) {
    throw DimensionError("weighted_loss: expected 3 color channels, got " +
                         std::to_string(pred.c));
  }
  WeightedLoss<T> r;
  r.grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  const double denom = static_cast<double>(pred.n) * pred.h * pred.w;
  const std::size_t plane = static_cast<std::size_t>(pred.h) * pred.w;
  double acc = 0.0;
  for (int n = 0; n < pred.n; ++n) {
    const T* tr = &target.data[target.idx(n, 0, 0, 0)];
    const T* tg = &target.data[target.idx(n, 1, 0, 0)];
    const T* tb = &target.data[target.idx(n, 2, 0, 0)];
    for (std::size_t i = 0; i < plane; ++i) {
      const int cls = nearest_class(static_cast<double>(tr[i]), static_cast<double>(tg[i]),
                                    static_cast<double>(tb[i]));
      const double w = cls < static_cast<int>(weights.w.size()) ? weights.w[cls] : 1.0;
      for (int c = 0; c < 3; ++c) {
        const std::size_t j = pred.idx(n, c, 0, 0) + i;
        const double d = static_cast<double>(pred.data[j]) - static_cast<double>(target.data[j]);
        acc += w * d * d;
        r.grad.data[j] = static_cast<T>(2.0 * w * d / denom);
      }
    }
  }
  r.loss = acc / denom;
  return r;
}

}  // namespace laneseg
