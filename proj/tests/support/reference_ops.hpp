#pragma once

// Independent brute-force references used as test oracles. These deliberately
// avoid the library's loop structure: inputs are materialized into a padded
// buffer and every output element is computed by a fresh quadruple loop.

#include <vector>

#include "laneseg/layers.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg::testing {

// Reference cross-correlation via explicit zero-padding.
template <typename T>
Tensor<T> reference_conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  const int ph = input.h + 2 * p.pad_h;
  const int pw = input.w + 2 * p.pad_w;
  Tensor<T> padded(input.n, input.c, ph, pw);
  for (int n = 0; n < input.n; ++n) {
    for (int c = 0; c < input.c; ++c) {
      for (int y = 0; y < input.h; ++y) {
        for (int x = 0; x < input.w; ++x) {
          padded.at(n, c, y + p.pad_h, x + p.pad_w) = input.at(n, c, y, x);
        }
      }
    }
  }
  const int oh = (ph - p.k_h()) / p.stride + 1;
  const int ow = (pw - p.k_w()) / p.stride + 1;
  Tensor<T> out(input.n, p.c_out(), oh, ow);
  for (int n = 0; n < input.n; ++n) {
    for (int co = 0; co < p.c_out(); ++co) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double acc = static_cast<double>(p.bias[co]);
          for (int ci = 0; ci < input.c; ++ci) {
            for (int ky = 0; ky < p.k_h(); ++ky) {
              for (int kx = 0; kx < p.k_w(); ++kx) {
                acc += static_cast<double>(padded.at(n, ci, y * p.stride + ky, x * p.stride + kx)) *
                       static_cast<double>(p.weights.at(co, ci, ky, kx));
              }
            }
          }
          out.at(n, co, y, x) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

// Dense 2-D kernel equivalent to a (k x 1 then 1 x k) or (1 x k then k x 1)
// branch of two 1-D convolutions: K[o,i,a,b] = sum_m W2[o,m,..] * W1[m,i,..].
template <typename T>
ConvParams<T> dense_equivalent(const ConvParams<T>& first, const ConvParams<T>& second) {
  const int k = first.k_h() > 1 ? first.k_h() : first.k_w();
  ConvParams<T> dense;
  dense.weights = Tensor<T>(second.c_out(), first.c_in(), k, k);
  dense.bias.assign(second.c_out(), T(0));
  dense.stride = 1;
  dense.pad_h = (k - 1) / 2;
  dense.pad_w = (k - 1) / 2;
  for (int o = 0; o < second.c_out(); ++o) {
    for (int i = 0; i < first.c_in(); ++i) {
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          double acc = 0.0;
          for (int m = 0; m < first.c_out(); ++m) {
            const double w1 = first.k_h() > 1 ? static_cast<double>(first.weights.at(m, i, a, 0))
                                              : static_cast<double>(first.weights.at(m, i, 0, b));
            const double w2 = second.k_h() > 1 ? static_cast<double>(second.weights.at(o, m, a, 0))
                                               : static_cast<double>(second.weights.at(o, m, 0, b));
            acc += w1 * w2;
          }
          dense.weights.at(o, i, a, b) = static_cast<T>(acc);
        }
      }
    }
  }
  return dense;
}

}  // namespace laneseg::testing
