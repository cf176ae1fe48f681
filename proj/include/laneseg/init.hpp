#pragma once

#include <cmath>

#include "laneseg/errors.hpp"
#include "laneseg/rng.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

// Xavier/Glorot uniform init: samples in +-sqrt(6 / (fan_in + fan_out)).
// For a conv kernel (c_out, c_in, k_h, k_w): fan_in = c_in*k_h*k_w,
// fan_out = c_out*k_h*k_w.
template <typename T>
Tensor<T> xavier_init(int n, int c, int h, int w, Rng& rng) {
  const long long fan_in = static_cast<long long>(c) * h * w;
  const long long fan_out = static_cast<long long>(n) * h * w;
  if (fan_in <= 0 || fan_out <= 0) {
    throw ConfigError("xavier_init: zero fan for shape " + Tensor<T>::shape_of(n, c, h, w));
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(n, c, h, w);
  for (auto& v : t.data) {
    v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

}  // namespace laneseg
