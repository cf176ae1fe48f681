#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/train.hpp"

namespace laneseg {

// Flat key = value configuration. Later keys override earlier ones, `#`
// starts a comment, unknown keys are rejected at load time.
struct Config {
  TrainConfig train;

  int crop_top = 180;
  int crop_bottom = 60;
  int road_tag = 7;
  int vehicle_tag = 10;
  double far_plane = 1000.0;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  int port = 7878;
  std::string data_manifest;
  std::string out_dir;

  void validate() const {
    train.validate();
    if (train.c_classes != LabelImage::kClasses) {
      throw ConfigError("c_classes: the color-coded pipeline supports exactly 3 classes");
    }
    if (crop_top < 0 || crop_bottom < 0) throw ConfigError("crop budgets must be >= 0");
    if (road_tag < 0 || road_tag > 255 || vehicle_tag < 0 || vehicle_tag > 255) {
      throw ConfigError("tags must be byte values");
    }
    if (road_tag == vehicle_tag) throw ConfigError("road_tag and vehicle_tag must differ");
    if (!(far_plane > 0.0)) throw ConfigError("far_plane must be positive");
    if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0) {
      throw ConfigError("split ratios must be positive");
    }
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
      throw ConfigError("split ratios must sum to 1");
    }
    if (port < 1 || port > 65535) throw ConfigError("port must lie in [1, 65535]");
    if (train.gcn_k < 1 || train.gcn_k % 2 == 0) throw ConfigError("gcn_k must be odd");
    for (std::size_t i = 0; i + 1 < train.filters.size(); ++i) {
      if (train.filters[i] > train.filters[i + 1]) {
        throw ConfigError("filters must be non-decreasing");
      }
    }
    for (int f : train.filters) {
      if (f < 1) throw ConfigError("filters must be positive");
    }
  }

  TagMap tags() const {
    return TagMap{static_cast<std::uint8_t>(road_tag), static_cast<std::uint8_t>(vehicle_tag)};
  }

  std::array<double, 3> ratios() const { return {train_ratio, val_ratio, test_ratio}; }
};

namespace detail {

struct ConfigParser {
  Config& cfg;
  std::string where;

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where + ": " + msg); }

  long long to_int(const std::string& v) const {
    std::size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + v + "'");
    }
    if (used != v.size()) fail("expected an integer, got '" + v + "'");
    return out;
  }

  double to_double(const std::string& v) const {
    std::size_t used = 0;
    double out = 0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + v + "'");
    }
    if (used != v.size()) fail("expected a number, got '" + v + "'");
    return out;
  }

  bool to_bool(const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true/false, got '" + v + "'");
  }

  std::vector<int> to_int_list(const std::string& v) const {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto begin = item.find_first_not_of(" \t");
      const auto end = item.find_last_not_of(" \t");
      if (begin == std::string::npos) fail("empty entry in list '" + v + "'");
      out.push_back(static_cast<int>(to_int(item.substr(begin, end - begin + 1))));
    }
    if (out.empty()) fail("empty list");
    return out;
  }

  void apply(const std::string& key, const std::string& value) {
    if (key == "lr") cfg.train.lr = to_double(value);
    else if (key == "epochs") cfg.train.epochs = static_cast<int>(to_int(value));
    else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(to_int(value));
    else if (key == "filters") cfg.train.filters = to_int_list(value);
    else if (key == "gcn_k") cfg.train.gcn_k = static_cast<int>(to_int(value));
    else if (key == "weight_beta") cfg.train.weight_beta = to_double(value);
    else if (key == "weight_alpha") cfg.train.weight_alpha = to_double(value);
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(to_int(value));
    else if (key == "c_classes") cfg.train.c_classes = static_cast<int>(to_int(value));
    else if (key == "weight_decay") cfg.train.weight_decay = to_double(value);
    else if (key == "bn_eps") cfg.train.bn_eps = to_double(value);
    else if (key == "bn_momentum") cfg.train.bn_momentum = to_double(value);
    else if (key == "br_post_relu") cfg.train.br_post_relu = to_bool(value);
    else if (key == "augment") cfg.train.augment = to_bool(value);
    else if (key == "crop_top") cfg.crop_top = static_cast<int>(to_int(value));
    else if (key == "crop_bottom") cfg.crop_bottom = static_cast<int>(to_int(value));
    else if (key == "road_tag") cfg.road_tag = static_cast<int>(to_int(value));
    else if (key == "vehicle_tag") cfg.vehicle_tag = static_cast<int>(to_int(value));
    else if (key == "far_plane") cfg.far_plane = to_double(value);
    else if (key == "train_ratio") cfg.train_ratio = to_double(value);
    else if (key == "val_ratio") cfg.val_ratio = to_double(value);
    else if (key == "test_ratio") cfg.test_ratio = to_double(value);
    else if (key == "port") cfg.port = static_cast<int>(to_int(value));
    else if (key == "data_manifest") cfg.data_manifest = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else fail("unknown key '" + key + "'");
  }
};

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// Keys, defaults and meanings are listed by `laneseg --help config`.
inline Config parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    detail::ConfigParser parser{cfg, path + ":" + std::to_string(lineno)};
    if (eq == std::string::npos) parser.fail("line has no '='");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty()) parser.fail("empty key");
    parser.apply(key, value);
  }
  Config validated = cfg;
  try {
    validated.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return validated;
}

}  // namespace laneseg
