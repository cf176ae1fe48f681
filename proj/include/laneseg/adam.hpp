#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/network.hpp"

namespace laneseg {

template <typename T>
struct AdamParams {
  T lr = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(0);  // L2 term folded into the gradient; off by default
};

namespace detail {

// One Adam update over a flat array. t is the post-increment step number
// (1 on the first call).
template <typename T>
void adam_apply(T* theta, const T* grad, T* m, T* v, std::size_t len, long long t,
                const AdamParams<T>& hp) {
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(hp.beta1), t));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(hp.beta2), t));
  for (std::size_t i = 0; i < len; ++i) {
    T g = grad[i];
    if (hp.weight_decay != T(0)) g += hp.weight_decay * theta[i];
    m[i] = hp.beta1 * m[i] + (T(1) - hp.beta1) * g;
    v[i] = hp.beta2 * v[i] + (T(1) - hp.beta2) * g * g;
    const T m_hat = m[i] / bc1;
    const T v_hat = v[i] / bc2;
    // the ratio stays O(1); scaling it by lr last avoids overflowing lr*m_hat
    theta[i] -= hp.lr * (m_hat / (static_cast<T>(std::sqrt(static_cast<double>(v_hat))) + hp.eps));
  }
}

}  // namespace detail

// Optimizer state for a single flat parameter array.
template <typename T>
struct AdamArrayState {
  AdamParams<T> hp;
  long long t = 0;
  std::vector<T> m, v;
};

// Pure single step: returns the updated parameters and state.
template <typename T>
std::pair<std::vector<T>, AdamArrayState<T>> adam_step(const std::vector<T>& theta,
                                                       const std::vector<T>& grad,
                                                       AdamArrayState<T> state) {
  if (theta.size() != grad.size()) {
    throw DimensionError("adam_step: parameter and gradient lengths differ (" +
                         std::to_string(theta.size()) + " vs " + std::to_string(grad.size()) +
                         ")");
  }
  if (state.m.empty()) state.m.assign(theta.size(), T(0));
  if (state.v.empty()) state.v.assign(theta.size(), T(0));
  if (state.m.size() != theta.size() || state.v.size() != theta.size()) {
    throw DimensionError("adam_step: moment arrays do not match parameter length");
  }
  for (const T& g : grad) {
    if (!std::isfinite(static_cast<double>(g))) {
      throw NumericError("adam_step: non-finite gradient element");
    }
  }
  std::vector<T> out = theta;
  state.t += 1;
  detail::adam_apply(out.data(), grad.data(), state.m.data(), state.v.data(), out.size(),
                     state.t, state.hp);
  return {std::move(out), std::move(state)};
}

// Optimizer state for a whole model: one moment pair per trainable array, in
// visit_params order, with a single shared step counter.
template <typename T>
struct AdamState {
  AdamParams<T> hp;
  long long t = 0;
  std::vector<std::vector<T>> m, v;
};

template <typename T>
AdamState<T> adam_init(const ModelParams<T>& params, AdamParams<T> hp = {}) {
  AdamState<T> s;
  s.hp = hp;
  visit_params(params, [&](const std::string&, ParamKind kind, const std::vector<T>& data) {
    if (!is_trainable(kind)) return;
    s.m.emplace_back(data.size(), T(0));
    s.v.emplace_back(data.size(), T(0));
  });
  return s;
}

// In-place Adam step over every trainable model parameter. Throws
// NumericError naming the parameter if a gradient element is non-finite.
template <typename T>
void adam_step_model(ModelParams<T>& params, const ModelGrads<T>& grads, AdamState<T>& state) {
  std::vector<std::vector<T>*> param_arrays;
  std::vector<const std::vector<T>*> grad_arrays;
  std::vector<std::string> names;
  visit_params(params, [&](const std::string& name, ParamKind kind, std::vector<T>& data) {
    if (!is_trainable(kind)) return;
    param_arrays.push_back(&data);
    names.push_back(name);
  });
  visit_params(grads, [&](const std::string&, ParamKind kind, const std::vector<T>& data) {
    if (!is_trainable(kind)) return;
    grad_arrays.push_back(&data);
  });
  if (param_arrays.size() != grad_arrays.size() || param_arrays.size() != state.m.size()) {
    throw DimensionError("adam_step_model: state does not match model layout");
  }
  for (std::size_t i = 0; i < param_arrays.size(); ++i) {
    if (param_arrays[i]->size() != grad_arrays[i]->size() ||
        param_arrays[i]->size() != state.m[i].size()) {
      throw DimensionError("adam_step_model: array length mismatch at " + names[i]);
    }
    for (const T& g : *grad_arrays[i]) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adam_step_model: non-finite gradient in " + names[i]);
      }
    }
  }
  state.t += 1;
  for (std::size_t i = 0; i < param_arrays.size(); ++i) {
    detail::adam_apply(param_arrays[i]->data(), grad_arrays[i]->data(), state.m[i].data(),
                       state.v[i].data(), param_arrays[i]->size(), state.t, state.hp);
    for (const T& v : *param_arrays[i]) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("adam_step_model: update produced non-finite value in " + names[i]);
      }
    }
  }
}

}  // namespace laneseg
