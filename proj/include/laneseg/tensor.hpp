#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "laneseg/errors.hpp"

namespace laneseg {

// Dense rank-4 tensor, row-major in (n, c, h, w) order.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;

  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) {
      throw DimensionError("tensor: negative dimension in " + shape_of(n_, c_, h_, w_));
    }
    data.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill);
  }

  std::size_t numel() const { return data.size(); }

  std::size_t idx(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
  }

  T& at(int in, int ic, int ih, int iw) { return data[idx(in, ic, ih, iw)]; }
  const T& at(int in, int ic, int ih, int iw) const { return data[idx(in, ic, ih, iw)]; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const { return shape_of(n, c, h, w); }

  static std::string shape_of(int n_, int c_, int h_, int w_) {
    return "(" + std::to_string(n_) + ", " + std::to_string(c_) + ", " +
           std::to_string(h_) + ", " + std::to_string(w_) + ")";
  }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  }
}

}  // namespace laneseg
