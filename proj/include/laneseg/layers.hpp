#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

// Convolution parameters. Cross-correlation convention (no kernel flip).
// Padding is given per axis, in pixels per side, so 1-D kernels (k x 1,
// 1 x k) can preserve spatial size.
template <typename T>
struct ConvParams {
  Tensor<T> weights;     // (c_out, c_in, k_h, k_w)
  std::vector<T> bias;   // length c_out
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;

  int c_out() const { return weights.n; }
  int c_in() const { return weights.c; }
  int k_h() const { return weights.h; }
  int k_w() const { return weights.w; }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

namespace detail {

// Output extent of one spatial axis, validated: (in + 2*pad - k) must be a
// non-negative multiple of stride and the result positive.
inline int conv_out_extent(int in, int k, int pad, int stride, const char* axis) {
  if (k < 1 || stride < 1 || pad < 0) {
    throw DimensionError(std::string("conv2d: invalid kernel/stride/padding on ") + axis);
  }
  const int span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0) {
    throw DimensionError(std::string("conv2d: ") + axis + " extent " + std::to_string(in) +
                         " incompatible with kernel " + std::to_string(k) + ", pad " +
                         std::to_string(pad) + ", stride " + std::to_string(stride));
  }
  return span / stride + 1;
}

// Range of output positions o for which o*stride - pad + k_off lands inside
// [0, in). Returns {lo, hi} inclusive; lo > hi means empty.
inline std::pair<int, int> valid_out_range(int in, int out, int k_off, int pad, int stride) {
  const int num_lo = pad - k_off;
  int lo = num_lo <= 0 ? 0 : (num_lo + stride - 1) / stride;
  const int num_hi = in - 1 + pad - k_off;
  int hi = num_hi < 0 ? -1 : std::min(out - 1, num_hi / stride);
  return {lo, hi};
}

template <typename T>
inline void check_conv_args(const Tensor<T>& input, const ConvParams<T>& p) {
  if (input.c != p.c_in()) {
    throw DimensionError("conv2d: input channel axis " + std::to_string(input.c) +
                         " does not match kernel input channels " + std::to_string(p.c_in()));
  }
  if (static_cast<int>(p.bias.size()) != p.c_out()) {
    throw DimensionError("conv2d: bias length " + std::to_string(p.bias.size()) +
                         " does not match output channel axis " + std::to_string(p.c_out()));
  }
}

}  // namespace detail

// Forward cross-correlation with per-channel bias. Inner accumulation runs in
// 64-bit floats.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  detail::check_conv_args(input, p);
  const int oh = detail::conv_out_extent(input.h, p.k_h(), p.pad_h, p.stride, "height");
  const int ow = detail::conv_out_extent(input.w, p.k_w(), p.pad_w, p.stride, "width");

  Tensor<T> out(input.n, p.c_out(), oh, ow);
  std::vector<double> plane(static_cast<std::size_t>(oh) * ow);
  for (int n = 0; n < input.n; ++n) {
    for (int co = 0; co < p.c_out(); ++co) {
      std::fill(plane.begin(), plane.end(), static_cast<double>(p.bias[co]));
      for (int ci = 0; ci < input.c; ++ci) {
        for (int kh = 0; kh < p.k_h(); ++kh) {
          const auto [rlo, rhi] = detail::valid_out_range(input.h, oh, kh, p.pad_h, p.stride);
          for (int kw = 0; kw < p.k_w(); ++kw) {
            const auto [clo, chi] = detail::valid_out_range(input.w, ow, kw, p.pad_w, p.stride);
            const double wv = static_cast<double>(p.weights.at(co, ci, kh, kw));
            if (wv == 0.0) continue;
            for (int r = rlo; r <= rhi; ++r) {
              const int ih = r * p.stride - p.pad_h + kh;
              const T* in_row = &input.data[input.idx(n, ci, ih, 0)];
              double* out_row = &plane[static_cast<std::size_t>(r) * ow];
              const int base = -p.pad_w + kw;
              for (int col = clo; col <= chi; ++col) {
                out_row[col] += wv * static_cast<double>(in_row[col * p.stride + base]);
              }
            }
          }
        }
      }
      T* dst = &out.data[out.idx(n, co, 0, 0)];
      for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<T>(plane[i]);
    }
  }
  return out;
}

// Exact gradients of sum(grad_out * conv2d(input, p)) w.r.t. input, weights
// and bias.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                             const Tensor<T>& grad_out) {
  detail::check_conv_args(input, p);
  const int oh = detail::conv_out_extent(input.h, p.k_h(), p.pad_h, p.stride, "height");
  const int ow = detail::conv_out_extent(input.w, p.k_w(), p.pad_w, p.stride, "width");
  if (grad_out.n != input.n || grad_out.c != p.c_out() || grad_out.h != oh || grad_out.w != ow) {
    throw DimensionError("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                         " does not match forward output " +
                         Tensor<T>::shape_of(input.n, p.c_out(), oh, ow));
  }

  ConvGrads<T> g;
  g.input = Tensor<T>(input.n, input.c, input.h, input.w);
  g.weights = Tensor<T>(p.c_out(), p.c_in(), p.k_h(), p.k_w());
  g.bias.assign(p.c_out(), T(0));

  // grad wrt input: scatter grad_out through the kernel
  std::vector<double> plane(static_cast<std::size_t>(input.h) * input.w);
  for (int n = 0; n < input.n; ++n) {
    for (int ci = 0; ci < input.c; ++ci) {
      std::fill(plane.begin(), plane.end(), 0.0);
      for (int co = 0; co < p.c_out(); ++co) {
        for (int kh = 0; kh < p.k_h(); ++kh) {
          const auto [rlo, rhi] = detail::valid_out_range(input.h, oh, kh, p.pad_h, p.stride);
          for (int kw = 0; kw < p.k_w(); ++kw) {
            const auto [clo, chi] = detail::valid_out_range(input.w, ow, kw, p.pad_w, p.stride);
            const double wv = static_cast<double>(p.weights.at(co, ci, kh, kw));
            if (wv == 0.0) continue;
            for (int r = rlo; r <= rhi; ++r) {
              const int ih = r * p.stride - p.pad_h + kh;
              const T* g_row = &grad_out.data[grad_out.idx(n, co, r, 0)];
              double* acc_row = &plane[static_cast<std::size_t>(ih) * input.w];
              const int base = -p.pad_w + kw;
              for (int col = clo; col <= chi; ++col) {
                acc_row[col * p.stride + base] += wv * static_cast<double>(g_row[col]);
              }
            }
          }
        }
      }
      T* dst = &g.input.data[g.input.idx(n, ci, 0, 0)];
      for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<T>(plane[i]);
    }
  }

  // grad wrt weights and bias
  for (int co = 0; co < p.c_out(); ++co) {
    double bias_acc = 0.0;
    for (int n = 0; n < input.n; ++n) {
      const T* g_plane = &grad_out.data[grad_out.idx(n, co, 0, 0)];
      for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) {
        bias_acc += static_cast<double>(g_plane[i]);
      }
    }
    g.bias[co] = static_cast<T>(bias_acc);
    for (int ci = 0; ci < input.c; ++ci) {
      for (int kh = 0; kh < p.k_h(); ++kh) {
        const auto [rlo, rhi] = detail::valid_out_range(input.h, oh, kh, p.pad_h, p.stride);
        for (int kw = 0; kw < p.k_w(); ++kw) {
          const auto [clo, chi] = detail::valid_out_range(input.w, ow, kw, p.pad_w, p.stride);
          double acc = 0.0;
          for (int n = 0; n < input.n; ++n) {
            for (int r = rlo; r <= rhi; ++r) {
              const int ih = r * p.stride - p.pad_h + kh;
              const T* g_row = &grad_out.data[grad_out.idx(n, co, r, 0)];
              const T* in_row = &input.data[input.idx(n, ci, ih, 0)];
              const int base = -p.pad_w + kw;
              for (int col = clo; col <= chi; ++col) {
                acc += static_cast<double>(g_row[col]) *
                       static_cast<double>(in_row[col * p.stride + base]);
              }
            }
          }
          g.weights.at(co, ci, kh, kw) = static_cast<T>(acc);
        }
      }
    }
  }
  return g;
}

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat index into the input, per output element
};

// 2x2 non-overlapping max pooling. Ties go to the first element in row-major
// window order.
template <typename T>
MaxPoolResult<T> maxpool2(const Tensor<T>& input) {
  if (input.h % 2 != 0) {
    throw DimensionError("maxpool2: height axis " + std::to_string(input.h) + " is odd");
  }
  if (input.w % 2 != 0) {
    throw DimensionError("maxpool2: width axis " + std::to_string(input.w) + " is odd");
  }
  MaxPoolResult<T> r;
  r.output = Tensor<T>(input.n, input.c, input.h / 2, input.w / 2);
  r.argmax.resize(r.output.numel());
  std::size_t o = 0;
  for (int n = 0; n < input.n; ++n) {
    for (int c = 0; c < input.c; ++c) {
      for (int oh = 0; oh < input.h / 2; ++oh) {
        for (int ow = 0; ow < input.w / 2; ++ow) {
          std::size_t best = input.idx(n, c, 2 * oh, 2 * ow);
          T best_v = input.data[best];
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t j = input.idx(n, c, 2 * oh + dy, 2 * ow + dx);
              if (input.data[j] > best_v) {
                best_v = input.data[j];
                best = j;
              }
            }
          }
          r.output.data[o] = best_v;
          r.argmax[o] = best;
          ++o;
        }
      }
    }
  }
  return r;
}

// Routes each output gradient entirely to the recorded argmax position.
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax,
                            int in_h, int in_w) {
  if (argmax.size() != grad_out.numel()) {
    throw DimensionError("maxpool2_backward: argmax record does not match grad_out");
  }
  Tensor<T> g(grad_out.n, grad_out.c, in_h, in_w);
  for (std::size_t i = 0; i < grad_out.numel(); ++i) {
    g.data[argmax[i]] += grad_out.data[i];
  }
  return g;
}

// Nearest-neighbor 2x upsampling: each pixel becomes a 2x2 block.
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& input) {
  Tensor<T> out(input.n, input.c, input.h * 2, input.w * 2);
  for (int n = 0; n < input.n; ++n) {
    for (int c = 0; c < input.c; ++c) {
      for (int y = 0; y < input.h; ++y) {
        const T* src = &input.data[input.idx(n, c, y, 0)];
        T* d0 = &out.data[out.idx(n, c, 2 * y, 0)];
        T* d1 = &out.data[out.idx(n, c, 2 * y + 1, 0)];
        for (int x = 0; x < input.w; ++x) {
          d0[2 * x] = d0[2 * x + 1] = d1[2 * x] = d1[2 * x + 1] = src[x];
        }
      }
    }
  }
  return out;
}

// Sums each 2x2 block of the output gradient.
template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& grad_out) {
  if (grad_out.h % 2 != 0 || grad_out.w % 2 != 0) {
    throw DimensionError("upsample_nearest2_backward: grad_out spatial dims must be even");
  }
  Tensor<T> g(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int n = 0; n < grad_out.n; ++n) {
    for (int c = 0; c < grad_out.c; ++c) {
      for (int y = 0; y < g.h; ++y) {
        const T* s0 = &grad_out.data[grad_out.idx(n, c, 2 * y, 0)];
        const T* s1 = &grad_out.data[grad_out.idx(n, c, 2 * y + 1, 0)];
        T* dst = &g.data[g.idx(n, c, y, 0)];
        for (int x = 0; x < g.w; ++x) {
          dst[x] = s0[2 * x] + s0[2 * x + 1] + s1[2 * x] + s1[2 * x + 1];
        }
      }
    }
  }
  return g;
}

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.9);  // fraction of the old running stat kept per update

  int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename T>
BatchNormParams<T> make_batchnorm(int channels, T eps = T(1e-5), T momentum = T(0.9)) {
  BatchNormParams<T> p;
  p.gamma.assign(channels, T(1));
  p.beta.assign(channels, T(0));
  p.running_mean.assign(channels, T(0));
  p.running_var.assign(channels, T(1));
  p.eps = eps;
  p.momentum = momentum;
  return p;
}

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
  bool training = false;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormParams<T> updated;  // new running stats; input params are not mutated
  BatchNormCache<T> cache;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

// Training mode normalizes by per-channel batch statistics (biased variance)
// and folds them into the running stats; inference mode uses the running
// stats unchanged.
template <typename T>
BatchNormResult<T> batchnorm(const Tensor<T>& input, const BatchNormParams<T>& p,
                             bool training) {
  if (input.c != p.channels() ||
      p.beta.size() != p.gamma.size() ||
      p.running_mean.size() != p.gamma.size() ||
      p.running_var.size() != p.gamma.size()) {
    throw DimensionError("batchnorm: channel axis " + std::to_string(input.c) +
                         " does not match parameter length " + std::to_string(p.channels()));
  }
  BatchNormResult<T> r;
  r.updated = p;
  r.cache.training = training;
  r.cache.x_hat = Tensor<T>(input.n, input.c, input.h, input.w);
  r.cache.inv_std.assign(input.c, T(0));
  r.output = Tensor<T>(input.n, input.c, input.h, input.w);

  const std::size_t plane = static_cast<std::size_t>(input.h) * input.w;
  const double m = static_cast<double>(input.n) * plane;
  for (int c = 0; c < input.c; ++c) {
    double mean, var;
    if (training) {
      double s1 = 0.0, s2 = 0.0;
      for (int n = 0; n < input.n; ++n) {
        const T* row = &input.data[input.idx(n, c, 0, 0)];
        for (std::size_t i = 0; i < plane; ++i) {
          const double v = static_cast<double>(row[i]);
          s1 += v;
          s2 += v * v;
        }
      }
      mean = s1 / m;
      var = std::max(0.0, s2 / m - mean * mean);
      r.updated.running_mean[c] = static_cast<T>(p.momentum * p.running_mean[c] +
                                                 (T(1) - p.momentum) * static_cast<T>(mean));
      r.updated.running_var[c] = static_cast<T>(p.momentum * p.running_var[c] +
                                                (T(1) - p.momentum) * static_cast<T>(var));
    } else {
      mean = static_cast<double>(p.running_mean[c]);
      var = static_cast<double>(p.running_var[c]);
    }
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(p.eps));
    r.cache.inv_std[c] = static_cast<T>(inv_std);
    const double g = static_cast<double>(p.gamma[c]);
    const double b = static_cast<double>(p.beta[c]);
    for (int n = 0; n < input.n; ++n) {
      const T* src = &input.data[input.idx(n, c, 0, 0)];
      T* xh = &r.cache.x_hat.data[r.cache.x_hat.idx(n, c, 0, 0)];
      T* dst = &r.output.data[r.output.idx(n, c, 0, 0)];
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = (static_cast<double>(src[i]) - mean) * inv_std;
        xh[i] = static_cast<T>(v);
        dst[i] = static_cast<T>(g * v + b);
      }
    }
  }
  return r;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                     const BatchNormParams<T>& p, const Tensor<T>& grad_out) {
  require_same_shape(cache.x_hat, grad_out, "batchnorm_backward");
  BatchNormGrads<T> g;
  g.input = Tensor<T>(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  g.gamma.assign(grad_out.c, T(0));
  g.beta.assign(grad_out.c, T(0));

  const std::size_t plane = static_cast<std::size_t>(grad_out.h) * grad_out.w;
  const double m = static_cast<double>(grad_out.n) * plane;
  for (int c = 0; c < grad_out.c; ++c) {
    double s_g = 0.0, s_gx = 0.0;
    for (int n = 0; n < grad_out.n; ++n) {
      const T* go = &grad_out.data[grad_out.idx(n, c, 0, 0)];
      const T* xh = &cache.x_hat.data[cache.x_hat.idx(n, c, 0, 0)];
      for (std::size_t i = 0; i < plane; ++i) {
        s_g += static_cast<double>(go[i]);
        s_gx += static_cast<double>(go[i]) * static_cast<double>(xh[i]);
      }
    }
    g.beta[c] = static_cast<T>(s_g);
    g.gamma[c] = static_cast<T>(s_gx);
    const double scale = static_cast<double>(p.gamma[c]) * static_cast<double>(cache.inv_std[c]);
    for (int n = 0; n < grad_out.n; ++n) {
      const T* go = &grad_out.data[grad_out.idx(n, c, 0, 0)];
      const T* xh = &cache.x_hat.data[cache.x_hat.idx(n, c, 0, 0)];
      T* dst = &g.input.data[g.input.idx(n, c, 0, 0)];
      if (cache.training) {
        for (std::size_t i = 0; i < plane; ++i) {
          const double v = static_cast<double>(go[i]) - s_g / m -
                           static_cast<double>(xh[i]) * s_gx / m;
          dst[i] = static_cast<T>(scale * v);
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) {
          dst[i] = static_cast<T>(scale * static_cast<double>(go[i]));
        }
      }
    }
  }
  return g;
}

// Elementwise max(0, x).
template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (T& v : out.data) {
    if (v < T(0)) v = T(0);
  }
  return out;
}

// Gradient passes where input > 0; subgradient 0 at exactly 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor<T> g(input.n, input.c, input.h, input.w);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    g.data[i] = input.data[i] > T(0) ? grad_out.data[i] : T(0);
  }
  return g;
}

}  // namespace laneseg
