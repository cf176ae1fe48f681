#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/init.hpp"
#include "laneseg/layers.hpp"
#include "laneseg/rng.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

// Large-kernel block split into two summed branches of 1-D convolutions:
// branch a = (k x 1) then (1 x k), branch b = (1 x k) then (k x 1). All four
// convs pad so spatial size is preserved; there is no nonlinearity inside.
template <typename T>
struct GcnBlockParams {
  ConvParams<T> a1, a2;
  ConvParams<T> b1, b2;

  int k() const { return a1.k_h(); }
};

// Residual refinement block y = x + w2 * relu(w1 * x). The post-addition
// ReLU is off by default so negative score logits stay representable.
template <typename T>
struct BrBlockParams {
  ConvParams<T> w1, w2;
  bool post_relu = false;
};

template <typename T>
struct EncoderBlock {
  ConvParams<T> conv;  // 3x3, pad 1
  BatchNormParams<T> bn;
};

template <typename T>
struct DecoderBlock {
  ConvParams<T> conv;  // 3x3, pad 1, applied after 2x upsampling
  BatchNormParams<T> bn;
};

// Full segmentation model: conical encoder, large-kernel block at the
// bottleneck, mirrored decoder, residual refinement, 1x1 class head.
template <typename T>
struct ModelParams {
  std::vector<EncoderBlock<T>> encoder;
  GcnBlockParams<T> gcn;
  std::vector<DecoderBlock<T>> decoder;
  BrBlockParams<T> br;
  ConvParams<T> head;

  int downsample_factor() const { return 1 << encoder.size(); }
};

template <typename T>
Tensor<T> gcn_block(const Tensor<T>& input, const GcnBlockParams<T>& p) {
  Tensor<T> a = conv2d(conv2d(input, p.a1), p.a2);
  Tensor<T> b = conv2d(conv2d(input, p.b1), p.b2);
  require_same_shape(a, b, "gcn_block");
  for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += b.data[i];
  return a;
}

template <typename T>
Tensor<T> br_block(const Tensor<T>& input, const BrBlockParams<T>& p) {
  Tensor<T> f = conv2d(relu(conv2d(input, p.w1)), p.w2);
  require_same_shape(f, input, "br_block");
  for (std::size_t i = 0; i < f.numel(); ++i) f.data[i] += input.data[i];
  if (p.post_relu) f = relu(f);
  return f;
}

// Gradient of the gcn block given the branch intermediates
// a_mid = conv(input, a1), b_mid = conv(input, b1). Parameter gradients are
// written into grads_out (same layout as the block); returns grad wrt input.
template <typename T>
Tensor<T> gcn_block_backward(const Tensor<T>& input, const GcnBlockParams<T>& p,
                             const Tensor<T>& a_mid, const Tensor<T>& b_mid,
                             const Tensor<T>& grad_out, GcnBlockParams<T>& grads_out) {
  auto a2_g = conv2d_backward(a_mid, p.a2, grad_out);
  grads_out.a2.weights = std::move(a2_g.weights);
  grads_out.a2.bias = std::move(a2_g.bias);
  auto a1_g = conv2d_backward(input, p.a1, a2_g.input);
  grads_out.a1.weights = std::move(a1_g.weights);
  grads_out.a1.bias = std::move(a1_g.bias);

  auto b2_g = conv2d_backward(b_mid, p.b2, grad_out);
  grads_out.b2.weights = std::move(b2_g.weights);
  grads_out.b2.bias = std::move(b2_g.bias);
  auto b1_g = conv2d_backward(input, p.b1, b2_g.input);
  grads_out.b1.weights = std::move(b1_g.weights);
  grads_out.b1.bias = std::move(b1_g.bias);

  Tensor<T> g = std::move(a1_g.input);
  for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += b1_g.input.data[i];
  return g;
}

// Gradient of the br block given the intermediates mid_pre = conv(x, w1),
// mid = relu(mid_pre), and the pre-ReLU sum when post_relu is set.
template <typename T>
Tensor<T> br_block_backward(const Tensor<T>& input, const BrBlockParams<T>& p,
                            const Tensor<T>& mid_pre, const Tensor<T>& mid,
                            const Tensor<T>& sum_pre_relu, const Tensor<T>& grad_out,
                            BrBlockParams<T>& grads_out) {
  Tensor<T> g = p.post_relu ? relu_backward(sum_pre_relu, grad_out) : grad_out;
  auto w2_g = conv2d_backward(mid, p.w2, g);
  grads_out.w2.weights = std::move(w2_g.weights);
  grads_out.w2.bias = std::move(w2_g.bias);
  Tensor<T> g_mid = relu_backward(mid_pre, w2_g.input);
  auto w1_g = conv2d_backward(input, p.w1, g_mid);
  grads_out.w1.weights = std::move(w1_g.weights);
  grads_out.w1.bias = std::move(w1_g.bias);
  for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += w1_g.input.data[i];
  return g;
}

// Per-layer activations retained by a training-mode forward pass, consumed by
// model_backward.
template <typename T>
struct ForwardTrace {
  bool valid = false;

  struct Enc {
    Tensor<T> conv_in;
    BatchNormCache<T> bn_cache;
    std::vector<T> bn_new_mean, bn_new_var;
    Tensor<T> relu_in;
    std::vector<std::size_t> pool_argmax;
    int pre_pool_h = 0, pre_pool_w = 0;
  };
  struct Dec {
    Tensor<T> conv_in;  // after upsampling
    BatchNormCache<T> bn_cache;
    std::vector<T> bn_new_mean, bn_new_var;
    Tensor<T> relu_in;
  };

  std::vector<Enc> enc;
  Tensor<T> gcn_in;
  Tensor<T> gcn_a_mid, gcn_b_mid;
  std::vector<Dec> dec;
  Tensor<T> br_in, br_mid_pre, br_mid;
  Tensor<T> br_sum;  // before the optional post-addition ReLU
  Tensor<T> head_in;
};

// Gradient container mirroring ModelParams: conv grads live in the weight and
// bias slots, batch-norm grads in gamma and beta. Running-stat slots are
// unused and stay zero.
template <typename T>
using ModelGrads = ModelParams<T>;

namespace detail {

template <typename T>
ConvParams<T> conv_like(const ConvParams<T>& p) {
  ConvParams<T> g;
  g.weights = Tensor<T>(p.weights.n, p.weights.c, p.weights.h, p.weights.w);
  g.bias.assign(p.bias.size(), T(0));
  g.stride = p.stride;
  g.pad_h = p.pad_h;
  g.pad_w = p.pad_w;
  return g;
}

template <typename T>
BatchNormParams<T> bn_like(const BatchNormParams<T>& p) {
  BatchNormParams<T> g;
  g.gamma.assign(p.gamma.size(), T(0));
  g.beta.assign(p.beta.size(), T(0));
  g.running_mean.assign(p.running_mean.size(), T(0));
  g.running_var.assign(p.running_var.size(), T(0));
  g.eps = p.eps;
  g.momentum = p.momentum;
  return g;
}

}  // namespace detail

template <typename T>
ModelGrads<T> zero_grads_like(const ModelParams<T>& p) {
  ModelGrads<T> g;
  for (const auto& e : p.encoder) {
    g.encoder.push_back({detail::conv_like(e.conv), detail::bn_like(e.bn)});
  }
  g.gcn.a1 = detail::conv_like(p.gcn.a1);
  g.gcn.a2 = detail::conv_like(p.gcn.a2);
  g.gcn.b1 = detail::conv_like(p.gcn.b1);
  g.gcn.b2 = detail::conv_like(p.gcn.b2);
  for (const auto& d : p.decoder) {
    g.decoder.push_back({detail::conv_like(d.conv), detail::bn_like(d.bn)});
  }
  g.br.w1 = detail::conv_like(p.br.w1);
  g.br.w2 = detail::conv_like(p.br.w2);
  g.br.post_relu = p.br.post_relu;
  g.head = detail::conv_like(p.head);
  return g;
}

// Encoder block: conv(3x3, pad 1) -> batchnorm -> relu -> maxpool2.
// Decoder block: upsample x2 -> conv(3x3, pad 1) -> batchnorm -> relu.
// Then gcn at the bottleneck, br after the decoder, 1x1 head last.
template <typename T>
Tensor<T> model_forward(const Tensor<T>& input, const ModelParams<T>& params, bool training,
                        ForwardTrace<T>* trace = nullptr) {
  const int factor = params.downsample_factor();
  if (input.h % factor != 0 || input.w % factor != 0) {
    throw DimensionError("model_forward: spatial dims " + std::to_string(input.h) + "x" +
                         std::to_string(input.w) + " not divisible by " +
                         std::to_string(factor));
  }
  if (trace) {
    *trace = ForwardTrace<T>{};
    trace->enc.resize(params.encoder.size());
    trace->dec.resize(params.decoder.size());
  }

  Tensor<T> x = input;
  for (std::size_t i = 0; i < params.encoder.size(); ++i) {
    const auto& blk = params.encoder[i];
    if (trace) trace->enc[i].conv_in = x;
    x = conv2d(x, blk.conv);
    auto bn = batchnorm(x, blk.bn, training);
    if (trace) {
      trace->enc[i].bn_cache = std::move(bn.cache);
      trace->enc[i].bn_new_mean = std::move(bn.updated.running_mean);
      trace->enc[i].bn_new_var = std::move(bn.updated.running_var);
      trace->enc[i].relu_in = bn.output;
    }
    x = relu(bn.output);
    if (trace) {
      trace->enc[i].pre_pool_h = x.h;
      trace->enc[i].pre_pool_w = x.w;
    }
    auto pooled = maxpool2(x);
    if (trace) trace->enc[i].pool_argmax = std::move(pooled.argmax);
    x = std::move(pooled.output);
  }

  if (trace) trace->gcn_in = x;
  Tensor<T> a_mid = conv2d(x, params.gcn.a1);
  Tensor<T> b_mid = conv2d(x, params.gcn.b1);
  Tensor<T> a = conv2d(a_mid, params.gcn.a2);
  Tensor<T> b = conv2d(b_mid, params.gcn.b2);
  require_same_shape(a, b, "gcn_block");
  if (trace) {
    trace->gcn_a_mid = std::move(a_mid);
    trace->gcn_b_mid = std::move(b_mid);
  }
  for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += b.data[i];
  x = std::move(a);

  for (std::size_t i = 0; i < params.decoder.size(); ++i) {
    const auto& blk = params.decoder[i];
    x = upsample_nearest2(x);
    if (trace) trace->dec[i].conv_in = x;
    x = conv2d(x, blk.conv);
    auto bn = batchnorm(x, blk.bn, training);
    if (trace) {
      trace->dec[i].bn_cache = std::move(bn.cache);
      trace->dec[i].bn_new_mean = std::move(bn.updated.running_mean);
      trace->dec[i].bn_new_var = std::move(bn.updated.running_var);
      trace->dec[i].relu_in = bn.output;
    }
    x = relu(bn.output);
  }

  if (trace) trace->br_in = x;
  {
    Tensor<T> mid_pre = conv2d(x, params.br.w1);
    Tensor<T> mid = relu(mid_pre);
    Tensor<T> f = conv2d(mid, params.br.w2);
    require_same_shape(f, x, "br_block");
    for (std::size_t i = 0; i < f.numel(); ++i) f.data[i] += x.data[i];
    if (trace) {
      trace->br_mid_pre = std::move(mid_pre);
      trace->br_mid = std::move(mid);
      trace->br_sum = f;
    }
    x = params.br.post_relu ? relu(f) : std::move(f);
  }

  if (trace) trace->head_in = x;
  x = conv2d(x, params.head);
  if (trace) trace->valid = true;
  return x;
}

// Exact reverse-mode gradients of the scalar loss whose d(loss)/d(output) is
// grad_out, for every trainable parameter. Requires the trace of a previous
// forward pass.
template <typename T>
ModelGrads<T> model_backward(const ModelParams<T>& params, const ForwardTrace<T>& trace,
                             const Tensor<T>& grad_out) {
  if (!trace.valid) {
    throw StateError("model_backward: no retained forward pass");
  }
  ModelGrads<T> grads = zero_grads_like(params);

  auto head_g = conv2d_backward(trace.head_in, params.head, grad_out);
  grads.head.weights = std::move(head_g.weights);
  grads.head.bias = std::move(head_g.bias);
  Tensor<T> g = br_block_backward(trace.br_in, params.br, trace.br_mid_pre, trace.br_mid,
                                  trace.br_sum, head_g.input, grads.br);

  for (std::size_t i = params.decoder.size(); i-- > 0;) {
    const auto& blk = params.decoder[i];
    const auto& tr = trace.dec[i];
    g = relu_backward(tr.relu_in, g);
    auto bn_g = batchnorm_backward(tr.bn_cache, blk.bn, g);
    grads.decoder[i].bn.gamma = std::move(bn_g.gamma);
    grads.decoder[i].bn.beta = std::move(bn_g.beta);
    auto conv_g = conv2d_backward(tr.conv_in, blk.conv, bn_g.input);
    grads.decoder[i].conv.weights = std::move(conv_g.weights);
    grads.decoder[i].conv.bias = std::move(conv_g.bias);
    g = upsample_nearest2_backward(conv_g.input);
  }

  g = gcn_block_backward(trace.gcn_in, params.gcn, trace.gcn_a_mid, trace.gcn_b_mid, g,
                         grads.gcn);

  for (std::size_t i = params.encoder.size(); i-- > 0;) {
    const auto& blk = params.encoder[i];
    const auto& tr = trace.enc[i];
    g = maxpool2_backward(g, tr.pool_argmax, tr.pre_pool_h, tr.pre_pool_w);
    g = relu_backward(tr.relu_in, g);
    auto bn_g = batchnorm_backward(tr.bn_cache, blk.bn, g);
    grads.encoder[i].bn.gamma = std::move(bn_g.gamma);
    grads.encoder[i].bn.beta = std::move(bn_g.beta);
    auto conv_g = conv2d_backward(tr.conv_in, blk.conv, bn_g.input);
    grads.encoder[i].conv.weights = std::move(conv_g.weights);
    grads.encoder[i].conv.bias = std::move(conv_g.bias);
    g = std::move(conv_g.input);
  }
  return grads;
}

// Adopts the running statistics recorded by a training-mode forward pass.
template <typename T>
void apply_bn_updates(ModelParams<T>& params, const ForwardTrace<T>& trace) {
  if (!trace.valid) {
    throw StateError("apply_bn_updates: no retained forward pass");
  }
  for (std::size_t i = 0; i < params.encoder.size(); ++i) {
    params.encoder[i].bn.running_mean = trace.enc[i].bn_new_mean;
    params.encoder[i].bn.running_var = trace.enc[i].bn_new_var;
  }
  for (std::size_t i = 0; i < params.decoder.size(); ++i) {
    params.decoder[i].bn.running_mean = trace.dec[i].bn_new_mean;
    params.decoder[i].bn.running_var = trace.dec[i].bn_new_var;
  }
}

namespace detail {

template <typename T>
ConvParams<T> make_conv(int c_out, int c_in, int k_h, int k_w, int pad_h, int pad_w, Rng& rng) {
  ConvParams<T> p;
  p.weights = xavier_init<T>(c_out, c_in, k_h, k_w, rng);
  p.bias.assign(c_out, T(0));
  p.stride = 1;
  p.pad_h = pad_h;
  p.pad_w = pad_w;
  return p;
}

}  // namespace detail

// Builds a freshly initialized model. Encoder filter counts must be
// non-decreasing; the decoder mirrors them. gcn_k must be odd so the 1-D
// kernels can preserve spatial size.
template <typename T>
ModelParams<T> init_model(int in_channels, const std::vector<int>& filters, int gcn_k,
                          int c_classes, Rng& rng, T bn_eps = T(1e-5), T bn_momentum = T(0.9),
                          bool br_post_relu = false) {
  if (filters.empty()) throw ConfigError("init_model: empty filter list");
  for (std::size_t i = 0; i + 1 < filters.size(); ++i) {
    if (filters[i] > filters[i + 1]) {
      throw ConfigError("init_model: encoder filter progression must be non-decreasing");
    }
  }
  for (int f : filters) {
    if (f < 1) throw ConfigError("init_model: filter counts must be positive");
  }
  if (gcn_k < 1 || gcn_k % 2 == 0) {
    throw ConfigError("init_model: gcn_k must be odd and positive, got " + std::to_string(gcn_k));
  }
  if (c_classes < 1) throw ConfigError("init_model: c_classes must be positive");

  ModelParams<T> m;
  int c = in_channels;
  for (int f : filters) {
    EncoderBlock<T> blk;
    blk.conv = detail::make_conv<T>(f, c, 3, 3, 1, 1, rng);
    blk.bn = make_batchnorm<T>(f, bn_eps, bn_momentum);
    m.encoder.push_back(std::move(blk));
    c = f;
  }

  const int p = (gcn_k - 1) / 2;
  m.gcn.a1 = detail::make_conv<T>(c, c, gcn_k, 1, p, 0, rng);
  m.gcn.a2 = detail::make_conv<T>(c, c, 1, gcn_k, 0, p, rng);
  m.gcn.b1 = detail::make_conv<T>(c, c, 1, gcn_k, 0, p, rng);
  m.gcn.b2 = detail::make_conv<T>(c, c, gcn_k, 1, p, 0, rng);

  // mirror: one upsampling block per pooling step, channels walking back down
  std::vector<int> dec_filters;
  for (std::size_t i = filters.size() - 1; i-- > 0;) dec_filters.push_back(filters[i]);
  dec_filters.push_back(filters[0]);
  for (int f : dec_filters) {
    DecoderBlock<T> blk;
    blk.conv = detail::make_conv<T>(f, c, 3, 3, 1, 1, rng);
    blk.bn = make_batchnorm<T>(f, bn_eps, bn_momentum);
    m.decoder.push_back(std::move(blk));
    c = f;
  }

  m.br.w1 = detail::make_conv<T>(c, c, 3, 3, 1, 1, rng);
  m.br.w2 = detail::make_conv<T>(c, c, 3, 3, 1, 1, rng);
  m.br.post_relu = br_post_relu;
  m.head = detail::make_conv<T>(c_classes, c, 1, 1, 0, 0, rng);
  return m;
}

enum class ParamKind : std::uint8_t {
  weight,
  bias,
  bn_gamma,
  bn_beta,
  bn_running_mean,
  bn_running_var,
};

inline bool is_trainable(ParamKind k) {
  return k != ParamKind::bn_running_mean && k != ParamKind::bn_running_var;
}

namespace detail {

template <typename T, typename F>
void visit_conv(const std::string& name, ConvParams<T>& p, F&& f) {
  f(name + ".weight", ParamKind::weight, p.weights.data);
  f(name + ".bias", ParamKind::bias, p.bias);
}

template <typename T, typename F>
void visit_bn(const std::string& name, BatchNormParams<T>& p, F&& f) {
  f(name + ".gamma", ParamKind::bn_gamma, p.gamma);
  f(name + ".beta", ParamKind::bn_beta, p.beta);
  f(name + ".running_mean", ParamKind::bn_running_mean, p.running_mean);
  f(name + ".running_var", ParamKind::bn_running_var, p.running_var);
}

}  // namespace detail

// Canonical parameter enumeration; the order defines the optimizer-state and
// checkpoint layout. f(name, kind, std::vector<T>& data).
template <typename T, typename F>
void visit_params(ModelParams<T>& m, F&& f) {
  for (std::size_t i = 0; i < m.encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i);
    detail::visit_conv(base + ".conv", m.encoder[i].conv, f);
    detail::visit_bn(base + ".bn", m.encoder[i].bn, f);
  }
  detail::visit_conv("gcn.a1", m.gcn.a1, f);
  detail::visit_conv("gcn.a2", m.gcn.a2, f);
  detail::visit_conv("gcn.b1", m.gcn.b1, f);
  detail::visit_conv("gcn.b2", m.gcn.b2, f);
  for (std::size_t i = 0; i < m.decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i);
    detail::visit_conv(base + ".conv", m.decoder[i].conv, f);
    detail::visit_bn(base + ".bn", m.decoder[i].bn, f);
  }
  detail::visit_conv("br.w1", m.br.w1, f);
  detail::visit_conv("br.w2", m.br.w2, f);
  detail::visit_conv("head", m.head, f);
}

template <typename T, typename F>
void visit_params(const ModelParams<T>& m, F&& f) {
  visit_params(const_cast<ModelParams<T>&>(m),
               [&](const std::string& name, ParamKind kind, std::vector<T>& data) {
                 f(name, kind, static_cast<const std::vector<T>&>(data));
               });
}

}  // namespace laneseg
