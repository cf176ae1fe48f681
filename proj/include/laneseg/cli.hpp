#pragma once

#include <csignal>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "laneseg/checkpoint.hpp"
#include "laneseg/client.hpp"
#include "laneseg/config.hpp"
#include "laneseg/datapipe.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/metrics.hpp"
#include "laneseg/server.hpp"
#include "laneseg/train.hpp"

namespace laneseg::cli {

constexpr const char* kUsage = R"(usage: laneseg <command> [options]

commands:
  preprocess  --manifest <raw.txt> --out-dir <dir> [--config <file>]
              crop raw simulator pairs and recolor labels (road green,
              vehicle blue); writes PNGs plus a new manifest
  augment     --manifest <m.txt> --out-dir <dir> [--config <file>] [--seed N]
              materialize one rotated and one shifted copy per pair
  train       --data <manifest> --out <model.lseg> [--history <csv>]
              [--config <file>] [--seed N]
              split, train, write the LSEG checkpoint and history CSV
  eval        --model <model.lseg> --data <manifest> [--report <csv>]
              [--triptych-dir <dir>]
              color-space MSE/MAE per image plus aggregate
  predict     --model <model.lseg> --image <in.png> --out <seg.png>
              write the class-colored segmentation of one image
  serve       [--bind <host:port>] [--config <file>]
              edge server: ingest FRAME/LABEL pairs, train on request,
              return the model
  send        --server <host:port> --manifest <m.txt> [--train]
              [--epochs N] [--out <model.lseg>]
              stream pairs to an edge server, optionally train and fetch
              the checkpoint

`--seed N` overrides the config seed on any command. The config file is
looked up from --config, then the LANESEG_CONFIG environment variable,
otherwise defaults apply. `laneseg --help config` lists every config key.
)";

constexpr const char* kConfigHelp = R"(config file: one `key = value` per line, `#` comments,
later keys override earlier ones, unknown keys are rejected.

training
  lr            learning rate                     (default 0.001)
  epochs        training epochs                   (default 40)
  batch_size    samples per optimizer step        (default 64)
  filters       encoder filters, comma list       (default 8,16,20,32)
  gcn_k         large-kernel block extent, odd    (default 7)
  weight_beta   class-weight lower clamp          (default 0.1)
  weight_alpha  class-weight upper clamp          (default 10.0)
  seed          rng seed                          (default 0)
  c_classes     class count (must be 3)           (default 3)
  weight_decay  L2 decay folded into gradients    (default 0)
  bn_eps        batch-norm epsilon                (default 1e-5)
  bn_momentum   running-stat retention in (0,1)   (default 0.9)
  br_post_relu  ReLU after the residual addition  (default false)
  augment       per-epoch rotate/shift expansion  (default false)

data pipeline
  crop_top      rows cropped from the top         (default 180)
  crop_bottom   rows cropped from the bottom      (default 60)
  road_tag      raw red-channel road id           (default 7)
  vehicle_tag   raw red-channel vehicle id        (default 10)
  far_plane     depth-decode far plane, meters    (default 1000)
  train_ratio   split fractions, must sum to 1    (default 0.8)
  val_ratio                                       (default 0.1)
  test_ratio                                      (default 0.1)

service / paths
  port          edge-server port                  (default 7878)
  data_manifest default --data value              (default empty)
  out_dir       default --out-dir value           (default empty)
)";

namespace detail {

struct Args {
  std::map<std::string, std::string> values;
  std::set<std::string> switches;

  bool has(const std::string& k) const { return values.count(k) || switches.count(k); }
  std::string get(const std::string& k, const std::string& fallback = "") const {
    auto it = values.find(k);
    return it == values.end() ? fallback : it->second;
  }
  std::string require(const std::string& k) const {
    auto it = values.find(k);
    if (it == values.end()) throw UsageError("missing required option " + k);
    return it->second;
  }
};

inline Args parse_args(const std::vector<std::string>& argv, std::size_t start,
                       const std::set<std::string>& value_opts,
                       const std::set<std::string>& switch_opts) {
  Args args;
  for (std::size_t i = start; i < argv.size(); ++i) {
    const std::string& a = argv[i];
    if (switch_opts.count(a)) {
      args.switches.insert(a);
    } else if (value_opts.count(a)) {
      if (i + 1 >= argv.size()) throw UsageError("option " + a + " needs a value");
      args.values[a] = argv[++i];
    } else {
      throw UsageError("unknown option " + a);
    }
  }
  return args;
}

inline Config load_config(const Args& args) {
  std::string path = args.get("--config");
  if (path.empty()) {
    if (const char* env = std::getenv("LANESEG_CONFIG")) path = env;
  }
  Config cfg = path.empty() ? Config{} : parse_config(path);
  if (args.has("--seed")) {
    try {
      cfg.train.seed = std::stoull(args.get("--seed"));
    } catch (const std::exception&) {
      throw UsageError("--seed expects an unsigned integer");
    }
  }
  return cfg;
}

inline std::pair<std::string, std::uint16_t> parse_hostport(const std::string& s,
                                                            std::uint16_t default_port) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) return {s, default_port};
  const std::string host = s.substr(0, colon);
  const std::string port_str = s.substr(colon + 1);
  try {
    const unsigned long port = std::stoul(port_str);
    if (port < 1 || port > 65535) throw std::out_of_range("port");
    return {host.empty() ? std::string("0.0.0.0") : host, static_cast<std::uint16_t>(port)};
  } catch (const std::exception&) {
    throw UsageError("cannot parse port in '" + s + "'");
  }
}

inline std::string zero_pad(std::size_t value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

inline std::vector<TrainSample> load_samples(const std::vector<ManifestEntry>& entries) {
  std::vector<TrainSample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) {
    TrainSample s;
    s.image = read_png(e.input);
    s.labels = decode_label_colors(read_png(e.label));
    samples.push_back(std::move(s));
  }
  return samples;
}

inline int cmd_preprocess(const Args& args) {
  const Config cfg = load_config(args);
  const std::string out_dir = args.get("--out-dir", cfg.out_dir);
  if (out_dir.empty()) throw UsageError("missing required option --out-dir");
  const auto entries = read_manifest(args.require("--manifest"));
  if (entries.empty()) throw DataError("preprocess: manifest lists no pairs");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "inputs");
  fs::create_directories(fs::path(out_dir) / "labels");

  std::vector<ManifestEntry> out_entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const RgbImage input = crop(read_png(entries[i].input), cfg.crop_top, cfg.crop_bottom);
    const RgbImage raw_label = crop(read_png(entries[i].label), cfg.crop_top, cfg.crop_bottom);
    const LabelImage labels = decode_labels(raw_label, cfg.tags());
    const std::string stem = zero_pad(i, 4) + ".png";
    write_png((fs::path(out_dir) / "inputs" / stem).string(), input);
    write_png((fs::path(out_dir) / "labels" / stem).string(), encode_label_colors(labels));
    out_entries.push_back({"inputs/" + stem, "labels/" + stem});
  }
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), out_entries);
  std::cout << "preprocessed " << out_entries.size() << " pairs into " << out_dir << "\n";
  return 0;
}

inline int cmd_augment(const Args& args) {
  const Config cfg = load_config(args);
  const std::string out_dir = args.get("--out-dir", cfg.out_dir);
  if (out_dir.empty()) throw UsageError("missing required option --out-dir");
  const auto entries = read_manifest(args.require("--manifest"));
  if (entries.empty()) throw DataError("augment: manifest lists no pairs");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "inputs");
  fs::create_directories(fs::path(out_dir) / "labels");

  Rng rng(cfg.train.seed);
  std::vector<ManifestEntry> out_entries;
  for (const auto& e : entries) {
    out_entries.push_back({fs::absolute(e.input).string(), fs::absolute(e.label).string()});
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const RgbImage image = read_png(entries[i].input);
    const LabelImage labels = decode_label_colors(read_png(entries[i].label));

    auto [rot_img, rot_lab] =
        rotate_aug(image, labels, cfg.train.rot_lo, cfg.train.rot_hi, rng);
    const std::string rot_stem = "rot_" + zero_pad(i, 4) + ".png";
    write_png((fs::path(out_dir) / "inputs" / rot_stem).string(), rot_img);
    write_png((fs::path(out_dir) / "labels" / rot_stem).string(), encode_label_colors(rot_lab));
    out_entries.push_back({"inputs/" + rot_stem, "labels/" + rot_stem});

    auto [shift_img, shift_lab] =
        shift_aug(image, labels, cfg.train.shift_w_lo, cfg.train.shift_w_hi,
                  cfg.train.shift_h_lo, cfg.train.shift_h_hi, rng);
    const std::string shift_stem = "shift_" + zero_pad(i, 4) + ".png";
    write_png((fs::path(out_dir) / "inputs" / shift_stem).string(), shift_img);
    write_png((fs::path(out_dir) / "labels" / shift_stem).string(),
              encode_label_colors(shift_lab));
    out_entries.push_back({"inputs/" + shift_stem, "labels/" + shift_stem});
  }
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), out_entries);
  std::cout << "augmented " << entries.size() << " pairs into " << out_entries.size()
            << " entries under " << out_dir << "\n";
  return 0;
}

inline int cmd_train(const Args& args) {
  const Config cfg = load_config(args);
  const std::string manifest_path = args.get("--data", cfg.data_manifest);
  if (manifest_path.empty()) throw UsageError("missing required option --data");
  const std::string out_path = args.require("--out");
  const std::string history_path = args.get("--history", out_path + ".history.csv");

  auto samples = load_samples(read_manifest(manifest_path));
  auto [train_set, val_set, test_set] =
      split_dataset(std::move(samples), cfg.ratios(), cfg.train.seed);
  TrainData data;
  data.train = std::move(train_set);
  data.val = std::move(val_set);
  std::cout << "training on " << data.train.size() << " images, validating on "
            << data.val.size() << ", holding out " << test_set.size() << "\n";

  TrainResult result;
  try {
    result = train(data, cfg.train);
  } catch (const TrainDivergedError& e) {
    save_checkpoint(out_path, e.last_good);
    write_history_csv(e.history, history_path);
    throw NumericError(std::string(e.what()) + "; last-good checkpoint written to " + out_path);
  }
  save_checkpoint(out_path, result.params);
  write_history_csv(result.history, history_path);
  const auto& last = result.history.back();
  std::cout << "final train mse " << laneseg::detail::fmt_double(last.train_mse) << ", mae "
            << laneseg::detail::fmt_double(last.train_mae) << "\n";

  if (!test_set.empty()) {
    std::vector<EvalSample> eval_set;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      eval_set.push_back({"test_" + std::to_string(i), test_set[i].image, test_set[i].labels});
    }
    const EvalReport report = evaluate(result.params, eval_set);
    std::cout << "held-out test mse " << laneseg::detail::fmt_double(report.mse) << ", mae "
              << laneseg::detail::fmt_double(report.mae) << "\n";
  }
  std::cout << "checkpoint: " << out_path << "\nhistory: " << history_path << "\n";
  return 0;
}

inline int cmd_eval(const Args& args) {
  const Config cfg = load_config(args);
  (void)cfg;
  const auto model = load_checkpoint(args.require("--model"));
  const auto entries = read_manifest(args.require("--data"));
  std::vector<EvalSample> samples;
  for (const auto& e : entries) {
    samples.push_back({e.input, read_png(e.input), decode_label_colors(read_png(e.label))});
  }
  const EvalReport report = evaluate(model, samples);
  const std::string report_path = args.get("--report", "report.csv");
  write_report_csv(report, report_path);

  const std::string trip_dir = args.get("--triptych-dir");
  if (!trip_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(trip_dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Tensor<float> scores = model_forward(image_to_tensor(samples[i].image), model, false);
      const RgbImage pred = render_scores(scores, 0);
      const RgbImage truth = encode_label_colors(samples[i].labels);
      write_png((fs::path(trip_dir) / (zero_pad(i, 4) + ".png")).string(),
                triptych(samples[i].image, truth, pred));
    }
  }
  std::cout << "evaluated " << samples.size() << " images: mse "
            << laneseg::detail::fmt_double(report.mse) << ", mae "
            << laneseg::detail::fmt_double(report.mae) << "\nreport: " << report_path << "\n";
  return 0;
}

inline int cmd_predict(const Args& args) {
  const auto model = load_checkpoint(args.require("--model"));
  const RgbImage input = read_png(args.require("--image"));
  const std::string out_path = args.require("--out");
  Tensor<float> scores = model_forward(image_to_tensor(input), model, false);
  write_png(out_path, encode_label_colors(classify_scores(scores, 0)));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

inline volatile std::sig_atomic_t g_serve_interrupted = 0;

inline int cmd_serve(const Args& args) {
  const Config cfg = load_config(args);
  auto [host, port] = parse_hostport(args.get("--bind", "0.0.0.0"),
                                     static_cast<std::uint16_t>(cfg.port));
  EdgeServer server(cfg.train, host, port);
  server.start();
  std::cout << "edge server listening on " << host << ":" << server.port() << "\n";

  g_serve_interrupted = 0;
  std::signal(SIGINT, [](int) { g_serve_interrupted = 1; });
  std::signal(SIGTERM, [](int) { g_serve_interrupted = 1; });
  while (!g_serve_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  std::cout << "shutting down\n";
  server.stop();
  return 0;
}

inline int cmd_send(const Args& args) {
  const Config cfg = load_config(args);
  auto [host, port] =
      parse_hostport(args.require("--server"), static_cast<std::uint16_t>(cfg.port));
  const auto entries = read_manifest(args.require("--manifest"));

  SendOptions options;
  options.request_training = args.has("--train");
  if (args.has("--epochs")) {
    try {
      options.epochs = static_cast<std::uint32_t>(std::stoul(args.get("--epochs")));
    } catch (const std::exception&) {
      throw UsageError("--epochs expects an unsigned integer");
    }
  }
  const SendResult result = send_frames(host, port, entries, options);
  std::cout << "sent " << result.pairs_sent << " frame/label pairs\n";
  if (options.request_training) {
    const std::string out_path = args.get("--out", "model.lseg");
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write model artifact: " + out_path);
    out.write(reinterpret_cast<const char*>(result.model_bytes.data()),
              static_cast<std::streamsize>(result.model_bytes.size()));
    std::cout << "received model (" << result.model_bytes.size() << " bytes): " << out_path
              << "\n";
  }
  return 0;
}

}  // namespace detail

// Dispatches a full command line (argv[0] excluded). Returns the process
// exit code; every failure prints a single `error[<code>]: ...` line.
inline int run(const std::vector<std::string>& argv) {
  using detail::parse_args;
  try {
    if (argv.empty()) {
      std::cerr << kUsage;
      return 1;
    }
    const std::string& cmd = argv[0];
    if (cmd == "--help" || cmd == "help" || cmd == "-h") {
      if (argv.size() > 1 && argv[1] == "config") {
        std::cout << kConfigHelp;
      } else {
        std::cout << kUsage;
      }
      return 0;
    }
    if (cmd == "preprocess") {
      return detail::cmd_preprocess(parse_args(
          argv, 1, {"--manifest", "--out-dir", "--config", "--seed"}, {}));
    }
    if (cmd == "augment") {
      return detail::cmd_augment(parse_args(
          argv, 1, {"--manifest", "--out-dir", "--config", "--seed"}, {}));
    }
    if (cmd == "train") {
      return detail::cmd_train(parse_args(
          argv, 1, {"--data", "--out", "--history", "--config", "--seed"}, {}));
    }
    if (cmd == "eval") {
      return detail::cmd_eval(parse_args(
          argv, 1, {"--model", "--data", "--report", "--triptych-dir", "--config", "--seed"},
          {}));
    }
    if (cmd == "predict") {
      return detail::cmd_predict(parse_args(
          argv, 1, {"--model", "--image", "--out", "--config", "--seed"}, {}));
    }
    if (cmd == "serve") {
      return detail::cmd_serve(parse_args(argv, 1, {"--bind", "--config", "--seed"}, {}));
    }
    if (cmd == "send") {
      return detail::cmd_send(parse_args(
          argv, 1, {"--server", "--manifest", "--epochs", "--out", "--config", "--seed"},
          {"--train"}));
    }
    throw UsageError("unknown command '" + cmd + "'");
  } catch (const UsageError& e) {
    std::cerr << "error[1]: " << e.what() << "\n" << kUsage;
    return 1;
  } catch (const Error& e) {
    std::cerr << "error[" << e.exit_code() << "]: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error[3]: " << e.what() << "\n";
    return 3;
  }
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace laneseg::cli
