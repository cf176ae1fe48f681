#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "laneseg/cli.hpp"
#include "laneseg/config.hpp"
#include "support/synth.hpp"

using namespace laneseg;
using namespace laneseg::testing;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  return path.string();
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in) << path;
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

// writes a tiny synthetic dataset and returns the manifest path
std::string make_dataset(const fs::path& dir, int count, int hw, std::uint64_t seed) {
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < count; ++i) {
    const TrainSample s = synth_road_sample(hw, hw, seed + i);
    const std::string in_path = (dir / ("img" + std::to_string(i) + ".png")).string();
    const std::string lab_path = (dir / ("lab" + std::to_string(i) + ".png")).string();
    write_png(in_path, s.image);
    write_png(lab_path, encode_label_colors(s.labels));
    entries.push_back({in_path, lab_path});
  }
  const std::string manifest = (dir / "manifest.txt").string();
  write_manifest(manifest, entries);
  return manifest;
}

const char* kTinyConfig =
    "# tiny model for fast end-to-end runs\n"
    "filters = 4, 8\n"
    "gcn_k = 3\n"
    "epochs = 2\n"
    "batch_size = 4\n"
    "lr = 0.01\n"
    "seed = 5\n";

}  // namespace

TEST(Config, EmptyFileGivesPaperDefaults) {
  const auto dir = fresh_dir("laneseg_cfg_defaults");
  const Config cfg = parse_config(write_text(dir / "empty.cfg", ""));
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.001);
  EXPECT_EQ(cfg.train.epochs, 40);
  EXPECT_EQ(cfg.train.batch_size, 64);
  EXPECT_EQ(cfg.train.filters, (std::vector<int>{8, 16, 20, 32}));
  EXPECT_EQ(cfg.train.gcn_k, 7);
  EXPECT_DOUBLE_EQ(cfg.train.weight_beta, 0.1);
  EXPECT_DOUBLE_EQ(cfg.train.weight_alpha, 10.0);
  EXPECT_EQ(cfg.crop_top, 180);
  EXPECT_EQ(cfg.crop_bottom, 60);
  EXPECT_EQ(cfg.road_tag, 7);
  EXPECT_EQ(cfg.vehicle_tag, 10);
  EXPECT_DOUBLE_EQ(cfg.far_plane, 1000.0);
  EXPECT_EQ(cfg.port, 7878);
}

TEST(Config, LaterKeysOverrideAndCommentsAreStripped) {
  const auto dir = fresh_dir("laneseg_cfg_override");
  const Config cfg = parse_config(write_text(dir / "c.cfg",
                                             "lr = 0.01  # tuning\n"
                                             "lr = 0.05\n"
                                             "# whole-line comment\n"
                                             "epochs = 7\n"));
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.05);
  EXPECT_EQ(cfg.train.epochs, 7);
}

TEST(Config, TypeErrorsNameTheLine) {
  const auto dir = fresh_dir("laneseg_cfg_type");
  const std::string path = write_text(dir / "c.cfg", "lr = 0.01\nepochs = zero\n");
  try {
    parse_config(path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeysAndMalformedLinesAreRejected) {
  const auto dir = fresh_dir("laneseg_cfg_bad");
  EXPECT_THROW(parse_config(write_text(dir / "a.cfg", "nope = 1\n")), ConfigError);
  EXPECT_THROW(parse_config(write_text(dir / "b.cfg", "just words\n")), ConfigError);
}

TEST(Config, InvariantsRecheckedAtLoad) {
  const auto dir = fresh_dir("laneseg_cfg_inv");
  EXPECT_THROW(parse_config(write_text(dir / "a.cfg", "train_ratio = 0.9\n")), ConfigError);
  EXPECT_THROW(parse_config(write_text(dir / "b.cfg", "weight_beta = 20\n")), ConfigError);
  EXPECT_THROW(parse_config(write_text(dir / "c.cfg", "gcn_k = 4\n")), ConfigError);
  EXPECT_THROW(parse_config(write_text(dir / "d.cfg", "road_tag = 7\nvehicle_tag = 7\n")),
               ConfigError);
  EXPECT_THROW(parse_config(write_text(dir / "e.cfg", "c_classes = 4\n")), ConfigError);
}

TEST(Cli, NoArgumentsPrintsUsageAndExits1) {
  EXPECT_EQ(cli::run(std::vector<std::string>{}), 1);
  EXPECT_EQ(cli::run({"frobnicate"}), 1);
  EXPECT_EQ(cli::run({"train", "--bogus-flag", "x"}), 1);
}

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(cli::run({"--help"}), 0);
  EXPECT_EQ(cli::run({"--help", "config"}), 0);
}

TEST(Cli, MissingFilesGiveDataErrorExitCode) {
  EXPECT_EQ(cli::run({"predict", "--model", "/nonexistent.lseg", "--image", "/nope.png",
                      "--out", "/tmp/out.png"}),
            2);
  EXPECT_EQ(cli::run({"eval", "--model", "/nonexistent.lseg", "--data", "/nope.txt"}), 2);
}

TEST(Cli, TrainPredictEvalEndToEnd) {
  const auto dir = fresh_dir("laneseg_cli_e2e");
  const std::string manifest = make_dataset(dir, 10, 16, 300);
  const std::string config = write_text(dir / "tiny.cfg", kTinyConfig);
  const std::string model = (dir / "model.lseg").string();

  EXPECT_EQ(cli::run({"train", "--config", config, "--data", manifest, "--out", model}), 0);
  EXPECT_TRUE(fs::exists(model));
  EXPECT_TRUE(fs::exists(model + ".history.csv"));

  // history CSV has the header and 3 rows (epoch 0 baseline + 2 epochs)
  std::ifstream hist(model + ".history.csv");
  std::string line;
  std::getline(hist, line);
  EXPECT_EQ(line, "epoch,train_mse,train_mae,val_mse,val_mae");
  int rows = 0;
  while (std::getline(hist, line)) ++rows;
  EXPECT_EQ(rows, 3);

  const std::string seg = (dir / "seg.png").string();
  EXPECT_EQ(cli::run({"predict", "--model", model, "--image",
                      (dir / "img0.png").string(), "--out", seg}),
            0);
  const RgbImage seg_img = read_png(seg);
  EXPECT_EQ(seg_img.h, 16);
  EXPECT_EQ(seg_img.w, 16);
  EXPECT_NO_THROW(decode_label_colors(seg_img));  // pure class colors only

  const std::string report = (dir / "report.csv").string();
  const std::string trip_dir = (dir / "trip").string();
  EXPECT_EQ(cli::run({"eval", "--model", model, "--data", manifest, "--report", report,
                      "--triptych-dir", trip_dir}),
            0);
  EXPECT_TRUE(fs::exists(report));
  EXPECT_TRUE(fs::exists(fs::path(trip_dir) / "0000.png"));
  const RgbImage trip = read_png((fs::path(trip_dir) / "0000.png").string());
  EXPECT_EQ(trip.w, 48);  // input | truth | prediction
}

TEST(Cli, IdenticalInvocationsProduceByteIdenticalOutputs) {
  const auto dir = fresh_dir("laneseg_cli_det");
  const std::string manifest = make_dataset(dir, 6, 16, 700);
  const std::string config = write_text(dir / "tiny.cfg", kTinyConfig);

  const std::string model_a = (dir / "a.lseg").string();
  const std::string model_b = (dir / "b.lseg").string();
  ASSERT_EQ(cli::run({"train", "--config", config, "--data", manifest, "--out", model_a}), 0);
  ASSERT_EQ(cli::run({"train", "--config", config, "--data", manifest, "--out", model_b}), 0);
  EXPECT_EQ(slurp(model_a), slurp(model_b));
  EXPECT_EQ(slurp(model_a + ".history.csv"), slurp(model_b + ".history.csv"));
}

TEST(Cli, SeedFlagOverridesConfigSeed) {
  const auto dir = fresh_dir("laneseg_cli_seed");
  const std::string manifest = make_dataset(dir, 6, 16, 900);
  const std::string config = write_text(dir / "tiny.cfg", kTinyConfig);

  const std::string model_a = (dir / "a.lseg").string();
  const std::string model_b = (dir / "b.lseg").string();
  ASSERT_EQ(cli::run({"train", "--config", config, "--data", manifest, "--out", model_a,
                      "--seed", "21"}),
            0);
  ASSERT_EQ(cli::run({"train", "--config", config, "--data", manifest, "--out", model_b,
                      "--seed", "22"}),
            0);
  EXPECT_NE(slurp(model_a), slurp(model_b));
}

TEST(Cli, PreprocessCropsAndRecolors) {
  const auto dir = fresh_dir("laneseg_cli_prep");
  // raw simulator-style pair: 24 rows, tags in the red channel of the label
  RgbImage raw_input(24, 16);
  RgbImage raw_label(24, 16);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 16; ++x) {
      raw_input.px(y, x)[1] = static_cast<std::uint8_t>(10 * (y % 20));
      raw_label.px(y, x)[0] = (x < 8) ? 7 : (y >= 12 && y < 16 ? 10 : 0);
    }
  }
  const std::string in_path = (dir / "raw_in.png").string();
  const std::string lab_path = (dir / "raw_lab.png").string();
  write_png(in_path, raw_input);
  write_png(lab_path, raw_label);
  const std::string manifest = (dir / "raw_manifest.txt").string();
  write_manifest(manifest, {{in_path, lab_path}});

  const std::string config =
      write_text(dir / "prep.cfg", "crop_top = 4\ncrop_bottom = 4\n");
  const std::string out_dir = (dir / "out").string();
  ASSERT_EQ(cli::run({"preprocess", "--config", config, "--manifest", manifest, "--out-dir",
                      out_dir}),
            0);

  const auto entries = read_manifest(out_dir + "/manifest.txt");
  ASSERT_EQ(entries.size(), 1u);
  const RgbImage cropped = read_png(entries[0].input);
  EXPECT_EQ(cropped.h, 16);
  const LabelImage labels = decode_label_colors(read_png(entries[0].label));
  EXPECT_EQ(labels.at(0, 0), LabelImage::kRoad);      // red tag 7
  EXPECT_EQ(labels.at(10, 12), LabelImage::kVehicle); // raw row 14, tag 10
  EXPECT_EQ(labels.at(0, 12), LabelImage::kBackground);
}

TEST(Cli, AugmentMaterializesThreefoldExpansion) {
  const auto dir = fresh_dir("laneseg_cli_aug");
  const std::string manifest = make_dataset(dir, 2, 16, 1200);
  const std::string out_dir = (dir / "aug").string();
  ASSERT_EQ(cli::run({"augment", "--manifest", manifest, "--out-dir", out_dir, "--seed", "4"}),
            0);
  const auto entries = read_manifest(out_dir + "/manifest.txt");
  EXPECT_EQ(entries.size(), 6u);  // originals + rotated + shifted
  for (const auto& e : entries) {
    EXPECT_NO_THROW(decode_label_colors(read_png(e.label)));
  }
}

TEST(Cli, ServeAndSendOverLoopback) {
  const auto dir = fresh_dir("laneseg_cli_send");
  const std::string manifest = make_dataset(dir, 2, 16, 1500);
  const std::string config = write_text(dir / "tiny.cfg", kTinyConfig);

  const Config cfg = parse_config(config);
  EdgeServer server(cfg.train);  // ephemeral port
  server.start();
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());
  const std::string model = (dir / "fetched.lseg").string();

  EXPECT_EQ(cli::run({"send", "--server", addr, "--manifest", manifest, "--train", "--epochs",
                      "1", "--out", model}),
            0);
  EXPECT_TRUE(fs::exists(model));
  EXPECT_NO_THROW(load_checkpoint(model));
  server.stop();

  // server gone: connection error surfaces as exit code 4
  EXPECT_EQ(cli::run({"send", "--server", addr, "--manifest", manifest}), 4);
}
