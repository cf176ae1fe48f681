#pragma once

// Central finite-difference gradient checking (the independent oracle for
// every backward pass). Runs on double instantiations of the layers so the
// h = 1e-3 step resolves cleanly against a 1e-3 relative tolerance.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "laneseg/rng.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg::testing {

constexpr double kFdStep = 1e-3;
constexpr double kFdRelTol = 1e-3;

struct GradCheckResult {
  bool ok = true;
  double worst_rel = 0.0;
  std::size_t worst_index = 0;
  std::string context;
};

// Relative deviation with a floor so near-zero coordinate pairs are compared
// against the gradient's overall scale rather than against noise.
inline bool fd_close(double analytic, double numeric, double scale_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), scale_floor, 1e-12});
  return std::abs(analytic - numeric) <= kFdRelTol * denom;
}

// Central difference of `loss` along coordinate i. When the first estimate
// misses the tolerance the step is shrunk and the coordinate re-evaluated:
// an estimate polluted by a nearby ReLU/pool kink converges to the analytic
// value as h shrinks, a genuine gradient bug does not. This keeps the check
// "away from non-differentiable points" without special-casing layers.
template <typename Scalar, typename LossFn>
double central_difference(std::vector<Scalar>& x, std::size_t i, const LossFn& loss,
                          double analytic, double denom_floor) {
  double numeric = 0.0;
  for (double h = kFdStep; h >= kFdStep / 512.0; h /= 8.0) {
    const Scalar keep = x[i];
    x[i] = keep + static_cast<Scalar>(h);
    const double up = loss();
    x[i] = keep - static_cast<Scalar>(h);
    const double down = loss();
    x[i] = keep;
    numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor, 1e-12});
    if (std::abs(analytic - numeric) <= kFdRelTol * denom) break;
  }
  return numeric;
}

// Checks d(loss)/d(x[i]) for every coordinate of x against central
// differences of `loss` (which must not capture x by value).
inline GradCheckResult check_gradient(std::vector<double>& x,
                                      const std::function<double()>& loss,
                                      const std::vector<double>& analytic,
                                      const std::string& context) {
  GradCheckResult res;
  res.context = context;
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(1e-9, 1e-4 * scale);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double numeric = central_difference(x, i, loss, analytic[i], floor);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), floor, 1e-12});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > res.worst_rel) {
      res.worst_rel = rel;
      res.worst_index = i;
    }
    if (rel > kFdRelTol) res.ok = false;
  }
  return res;
}

inline Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.data) v = rng.normal();
  return t;
}

// Random tensor with every element nudged away from zero, for layers with a
// kink at the origin.
inline Tensor<double> random_tensor_margin(int n, int c, int h, int w, Rng& rng,
                                           double margin = 0.05) {
  Tensor<double> t = random_tensor(n, c, h, w, rng);
  for (auto& v : t.data) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

// Ensures every 2x2 pooling window has a clear maximum so finite differences
// stay away from ties.
inline void separate_pool_ties(Tensor<double>& t, double gap = 0.05) {
  for (int n = 0; n < t.n; ++n) {
    for (int c = 0; c < t.c; ++c) {
      for (int y = 0; y + 1 < t.h; y += 2) {
        for (int x = 0; x + 1 < t.w; x += 2) {
          double best = t.at(n, c, y, x);
          int by = y, bx = x;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              if (t.at(n, c, y + dy, x + dx) > best) {
                best = t.at(n, c, y + dy, x + dx);
                by = y + dy;
                bx = x + dx;
              }
            }
          }
          t.at(n, c, by, bx) = best + gap;
        }
      }
    }
  }
}

}  // namespace laneseg::testing
