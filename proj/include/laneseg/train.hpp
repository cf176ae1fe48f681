#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "laneseg/adam.hpp"
#include "laneseg/datapipe.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/loss.hpp"
#include "laneseg/metrics.hpp"
#include "laneseg/network.hpp"
#include "laneseg/rng.hpp"
#include "laneseg/tensor.hpp"

namespace laneseg {

struct TrainConfig {
  double lr = 0.001;
  int epochs = 40;
  int batch_size = 64;
  std::vector<int> filters = {8, 16, 20, 32};
  int gcn_k = 7;
  double weight_beta = 0.1;
  double weight_alpha = 10.0;
  std::uint64_t seed = 0;
  int c_classes = 3;

  double weight_decay = 0.0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  bool br_post_relu = false;

  // On-the-fly per-epoch augmentation: each sample additionally contributes
  // one rotated and one shifted copy, mirroring the materialized expansion.
  bool augment = false;
  double rot_lo = 0.0, rot_hi = 30.0;
  double shift_w_lo = 0.0, shift_w_hi = 0.2;
  double shift_h_lo = 0.0, shift_h_hi = 0.1;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(weight_beta > 0.0) || !(weight_beta < weight_alpha)) {
      throw ConfigError("train: need 0 < weight_beta < weight_alpha");
    }
    if (c_classes < 1) throw ConfigError("train: c_classes must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (!(bn_eps > 0.0)) throw ConfigError("train: bn_eps must be positive");
    if (!(bn_momentum > 0.0) || !(bn_momentum < 1.0)) {
      throw ConfigError("train: bn_momentum must lie in (0, 1)");
    }
  }
};

struct TrainSample {
  RgbImage image;
  LabelImage labels;
};

struct TrainData {
  std::vector<TrainSample> train;
  std::vector<TrainSample> val;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0, train_mae = 0.0;
  double val_mse = 0.0, val_mae = 0.0;  // NaN when there is no validation set
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<EpochStats> history;
};

// Raised when the loss or a gradient goes non-finite; carries the parameters
// from the end of the last completed epoch plus the history so far.
class TrainDivergedError : public NumericError {
 public:
  TrainDivergedError(const std::string& what, ModelParams<float> last_good,
                     std::vector<EpochStats> history)
      : NumericError(what), last_good(std::move(last_good)), history(std::move(history)) {}

  ModelParams<float> last_good;
  std::vector<EpochStats> history;
};

namespace detail {

struct AugSpec {
  std::size_t index = 0;
  enum class Kind : std::uint8_t { none, rotate, shift } kind = Kind::none;
  double angle = 0.0;
  int dx = 0, dy = 0;
};

inline void materialize_sample(const TrainSample& src, const AugSpec& spec, RgbImage& img,
                               LabelImage& labels) {
  switch (spec.kind) {
    case AugSpec::Kind::none:
      img = src.image;
      labels = src.labels;
      break;
    case AugSpec::Kind::rotate:
      if (spec.angle == 0.0) {
        img = src.image;
        labels = src.labels;
      } else {
        img = rotate_image(src.image, spec.angle);
        labels = rotate_labels(src.labels, spec.angle);
      }
      break;
    case AugSpec::Kind::shift:
      if (spec.dx == 0 && spec.dy == 0) {
        img = src.image;
        labels = src.labels;
      } else {
        auto pair = shift_images(src.image, src.labels, spec.dx, spec.dy);
        img = std::move(pair.first);
        labels = std::move(pair.second);
      }
      break;
  }
}

inline void accumulate_metrics(const ModelParams<float>& model,
                               const std::vector<TrainSample>& samples, double& out_mse,
                               double& out_mae) {
  if (samples.empty()) {
    out_mse = std::nan("");
    out_mae = std::nan("");
    return;
  }
  double sq = 0.0, ab = 0.0;
  std::size_t total = 0;
  for (const TrainSample& s : samples) {
    Tensor<float> scores = model_forward(image_to_tensor(s.image), model, /*training=*/false);
    const RgbImage rendered = render_scores(scores, 0);
    const RgbImage truth = encode_label_colors(s.labels);
    sq += mse(rendered, truth) * static_cast<double>(rendered.pixels.size());
    ab += mae(rendered, truth) * static_cast<double>(rendered.pixels.size());
    total += rendered.pixels.size();
  }
  out_mse = sq / static_cast<double>(total);
  out_mae = ab / static_cast<double>(total);
}

}  // namespace detail

// Seeded end-to-end training: per epoch a seeded shuffle, then per batch
// class weights from the batch labels, forward, weighted loss, backward,
// one Adam step, and adoption of the batch-norm running stats. History rows
// record color-space MSE/MAE on the train and validation sets, with epoch 0
// holding the untrained baseline.
inline TrainResult train(const TrainData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty()) throw DataError("train: empty dataset");
  if (cfg.c_classes != LabelImage::kClasses) {
    throw ConfigError("train: the color-coded pipeline supports exactly " +
                      std::to_string(LabelImage::kClasses) + " classes");
  }
  const int h = data.train.front().image.h;
  const int w = data.train.front().image.w;
  auto check_sample = [&](const TrainSample& s) {
    if (s.image.h != h || s.image.w != w || s.labels.h != h || s.labels.w != w) {
      throw DimensionError("train: all images and labels must share one size");
    }
  };
  for (const auto& s : data.train) check_sample(s);
  for (const auto& s : data.val) check_sample(s);
  const int factor = 1 << cfg.filters.size();
  if (h % factor != 0 || w % factor != 0) {
    throw DimensionError("train: image size " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by the model's downsample factor " +
                         std::to_string(factor));
  }

  Rng rng(cfg.seed);
  ModelParams<float> params =
      init_model<float>(3, cfg.filters, cfg.gcn_k, cfg.c_classes, rng,
                        static_cast<float>(cfg.bn_eps), static_cast<float>(cfg.bn_momentum),
                        cfg.br_post_relu);
  AdamParams<float> hp;
  hp.lr = static_cast<float>(cfg.lr);
  hp.weight_decay = static_cast<float>(cfg.weight_decay);
  AdamState<float> adam = adam_init(params, hp);

  std::vector<EpochStats> history;
  auto record_epoch = [&](int epoch) {
    EpochStats st;
    st.epoch = epoch;
    detail::accumulate_metrics(params, data.train, st.train_mse, st.train_mae);
    detail::accumulate_metrics(params, data.val, st.val_mse, st.val_mae);
    history.push_back(st);
  };
  record_epoch(0);

  ModelParams<float> last_good = params;
  RgbImage scratch_img;
  LabelImage scratch_labels;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<detail::AugSpec> specs;
    specs.reserve(data.train.size() * (cfg.augment ? 3 : 1));
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      specs.push_back({i, detail::AugSpec::Kind::none, 0.0, 0, 0});
      if (cfg.augment) {
        detail::AugSpec rot{i, detail::AugSpec::Kind::rotate, 0.0, 0, 0};
        rot.angle = rng.uniform(cfg.rot_lo, cfg.rot_hi);
        specs.push_back(rot);
        detail::AugSpec sh{i, detail::AugSpec::Kind::shift, 0.0, 0, 0};
        sh.dx = static_cast<int>(std::lround(rng.uniform(cfg.shift_w_lo, cfg.shift_w_hi) * w));
        sh.dy = static_cast<int>(std::lround(rng.uniform(cfg.shift_h_lo, cfg.shift_h_hi) * h));
        specs.push_back(sh);
      }
    }
    rng.shuffle(specs.begin(), specs.end());

    for (std::size_t start = 0; start < specs.size(); start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, specs.size() - start);
      Tensor<float> input(static_cast<int>(count), 3, h, w);
      Tensor<float> target(static_cast<int>(count), 3, h, w);
      std::vector<LabelImage> batch_labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        detail::materialize_sample(data.train[specs[start + i].index], specs[start + i],
                                   scratch_img, scratch_labels);
        image_into_tensor(scratch_img, input, static_cast<int>(i));
        label_into_target(scratch_labels, target, static_cast<int>(i));
        batch_labels[i] = scratch_labels;
      }
      const ClassWeights cw =
          class_weights(batch_labels, cfg.weight_beta, cfg.weight_alpha, cfg.c_classes);

      ForwardTrace<float> trace;
      Tensor<float> scores = model_forward(input, params, /*training=*/true, &trace);
      WeightedLoss<float> loss = weighted_loss(scores, target, cw);
      if (!std::isfinite(loss.loss)) {
        throw TrainDivergedError("train: non-finite loss at epoch " + std::to_string(epoch),
                                 std::move(last_good), std::move(history));
      }
      try {
        ModelGrads<float> grads = model_backward(params, trace, loss.grad);
        adam_step_model(params, grads, adam);
      } catch (const NumericError& e) {
        throw TrainDivergedError(std::string("train: ") + e.what() + " at epoch " +
                                     std::to_string(epoch),
                                 std::move(last_good), std::move(history));
      }
      apply_bn_updates(params, trace);
    }

    record_epoch(epoch);
    last_good = params;
  }
  return {std::move(params), std::move(history)};
}

inline void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write history: " + path);
  out << "epoch,train_mse,train_mae,val_mse,val_mae\n";
  for (const auto& st : history) {
    out << st.epoch << ',' << detail::fmt_double(st.train_mse) << ','
        << detail::fmt_double(st.train_mae) << ',' << detail::fmt_double(st.val_mse) << ','
        << detail::fmt_double(st.val_mae) << '\n';
  }
}

}  // namespace laneseg
