// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <stdlib.h>
#include <zlib.h>

#include <fstream>
#include <sstream>

#include "mradnet/cli.hpp"
#include "test_support.hpp"

using namespace mradnet;
using nlohmann::json;
using testing_support::scratch_dir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);)
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void put(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

std::size_t count_files(const fs::path& root, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ext) ++n;
  return n;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.num_frames = 4;
  c.height = c.width = 32;
  c.embed_channels = 4;
  c.stage_channels = {8, 16};
  c.stage_depths = {1, 1};
  c.stage_mixers = {MixerKind::SepConv, MixerKind::Attention};
  c.decoder_depths = {1};
  c.decoder_mixers = {MixerKind::SepConv};
  c.attn_heads = 2;
  return c;
}

json tiny_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 2;
  t.lr0 = 1e-3;
  t.seed = 3;
  t.window = 4;
  t.stride = 4;
  return t;
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override { unsetenv("MRADNET_SEED"); }
  void TearDown() override { unsetenv("MRADNET_SEED"); }

  fs::path synth(const std::string& name, std::size_t frames = 8) {
    const fs::path d = scratch_dir(name) / "data";
    const auto r = run_cli({"synth", "--out", d.string(), "--sequences", "2", "--frames", std::to_string(frames),
                        "--objects", "2", "--height", "32", "--width", "32", "--seed", "5"});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }

  std::pair<fs::path, fs::path> configs(const fs::path& dir) {
    put(dir / "model.json", tiny_model());
    put(dir / "train.json", tiny_train());
    return {dir / "model.json", dir / "train.json"};
  }
};

}  // namespace

TEST_F(CliTest, SynthLayoutCounts) {
  const fs::path d = scratch_dir("synth_counts") / "data";
  const auto r = run_cli({"synth", "--out", d.string(), "--sequences", "2", "--frames", "40", "--height", "32", "--width",
                      "32", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(d))
    if (e.is_directory()) {
      ++dirs;
      EXPECT_TRUE(fs::exists(e.path() / "annot.txt"));
    }
  EXPECT_EQ(dirs, 2u);
  EXPECT_EQ(count_files(d, ".npy"), 2u * 40u * 4u);
  EXPECT_TRUE(fs::exists(d / "run_manifest.json"));
}

TEST_F(CliTest, SynthIsDeterministic) {
  const fs::path a = scratch_dir("synth_det_a") / "d", b = scratch_dir("synth_det_b") / "d";
  for (const auto& d : {a, b})
    ASSERT_EQ(run_cli({"synth", "--out", d.string(), "--frames", "6", "--height", "32", "--width", "32", "--seed", "9"}).code,
              0);
  const std::vector<std::string> skip{"run_manifest.json", "effective_config.json"};
  EXPECT_EQ(manifest::content_hash(a, skip), manifest::content_hash(b, skip));
  const fs::path c = scratch_dir("synth_det_c") / "d";
  ASSERT_EQ(run_cli({"synth", "--out", c.string(), "--frames", "6", "--height", "32", "--width", "32", "--seed", "10"}).code,
            0);
  EXPECT_NE(manifest::content_hash(a, skip), manifest::content_hash(c, skip));
}

TEST_F(CliTest, SynthRefusesNonEmptyDirWithoutForce) {
  const fs::path d = synth("synth_force");
  const auto again = run_cli({"synth", "--out", d.string(), "--frames", "4", "--height", "32", "--width", "32"});
  EXPECT_EQ(again.code, 2);
  EXPECT_EQ(json_lines(again.err).back()["kind"], "config");
  const auto forced =
      run_cli({"synth", "--out", d.string(), "--frames", "4", "--height", "32", "--width", "32", "--force"});
  EXPECT_EQ(forced.code, 0) << forced.err;
  EXPECT_EQ(count_files(d, ".npy"), 2u * 4u * 4u);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  setenv("MRADNET_SEED", "77", 1);
  const fs::path d = scratch_dir("synth_env") / "d";
  const auto r = run_cli({"synth", "--out", d.string(), "--frames", "4", "--height", "32", "--width", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json man = json::parse(slurp(d / "run_manifest.json"));
  EXPECT_EQ(man["seeds"]["seed"], 77);
  EXPECT_EQ(man["seeds"]["source"], "MRADNET_SEED");

  setenv("MRADNET_SEED", "x1", 1);
  EXPECT_EQ(run_cli({"synth", "--out", (scratch_dir("synth_env_bad") / "d").string()}).code, 2);
}

TEST_F(CliTest, ConfigFileAndFlagOverride) {
  const fs::path dir = scratch_dir("flag_override");
  put(dir / "synth.json", {{"out", (dir / "d").string()}, {"frames", 5}, {"height", 32}, {"width", 32}, {"seed", 2}});
  const auto r = run_cli({"synth", "--config", (dir / "synth.json").string(), "--frames", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json eff = json_lines(r.out).front()["effective_config"];
  EXPECT_EQ(eff["frames"], 3);
  EXPECT_EQ(eff["seed"], 2);
  EXPECT_EQ(count_files(dir / "d", ".npy"), 2u * 3u * 4u);

  put(dir / "bad.json", {{"frames", 5}, {"colour", "red"}});
  EXPECT_EQ(run_cli({"synth", "--config", (dir / "bad.json").string()}).code, 2);
}

TEST_F(CliTest, TrainOneEpochThenResume) {
  const fs::path data = synth("train_resume");
  const fs::path dir = data.parent_path();
  const auto [model, train] = configs(dir);
  const fs::path out = dir / "run";
  const std::vector<std::string> base{"train",          "--data", data.string(), "--model-config", model.string(),
                                      "--train-config", train.string(), "--out", out.string()};

  auto args = base;
  args.insert(args.end(), {"--stop-after", "1"});
  const auto first = run_cli(args);
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_TRUE(fs::exists(out / "checkpoint_epoch_001.mradckpt"));
  EXPECT_FALSE(fs::exists(out / "checkpoint_epoch_002.mradckpt"));
  EXPECT_TRUE(fs::exists(out / "run_manifest.json"));
  const auto after_one = load_checkpoint<float>(out / "last.mradckpt");
  ASSERT_EQ(after_one.state.epoch, 1u);
  const std::size_t steps_per_epoch = after_one.state.step;
  ASSERT_GT(steps_per_epoch, 0u);
  {
    std::ifstream log(out / "train_log.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(log, line);
    EXPECT_EQ(line, "step,epoch,lr,loss");
    while (std::getline(log, line)) ++rows;
    EXPECT_EQ(rows, steps_per_epoch);
  }

  args = base;
  args.push_back("--resume");
  const auto second = run_cli(args);
  ASSERT_EQ(second.code, 0) << second.err;
  const auto resumed = load_checkpoint<float>(out / "last.mradckpt");
  EXPECT_EQ(resumed.state.epoch, 2u);
  EXPECT_EQ(resumed.state.step, 2 * steps_per_epoch);
  for (std::size_t i = 0; i < resumed.state.history.size(); ++i) EXPECT_EQ(resumed.state.history[i].step, i);

  // An uninterrupted run lands on the same parameters.
  const fs::path straight = dir / "straight";
  args = base;
  args.back() = straight.string();
  ASSERT_EQ(run_cli(args).code, 0);
  const auto full = load_checkpoint<float>(straight / "last.mradckpt");
  for (const auto& [path, p] : full.state.params)
    EXPECT_TRUE(bitwise_equal(p.value(), resumed.state.params.at(path).value())) << path;
}

TEST_F(CliTest, InvalidConfigRejectedBeforeCompute) {
  const fs::path data = synth("train_invalid");
  const fs::path dir = data.parent_path();
  ModelConfig m = tiny_model();
  m.height = 30;
  m.attn_heads = 3;
  put(dir / "model.json", m);
  json t = tiny_train();
  t["lr0"] = -1.0;
  put(dir / "train.json", t);
  const fs::path out = dir / "run";
  const auto r = run_cli({"train", "--data", data.string(), "--model-config", (dir / "model.json").string(),
                      "--train-config", (dir / "train.json").string(), "--out", out.string()});
  EXPECT_EQ(r.code, 2);
  const json e = json_lines(r.err).back();
  EXPECT_EQ(e["kind"], "config");
  EXPECT_GE(e["problems"].size(), 3u);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, ShortSequenceWarningSurfacesAtTrain) {
  const fs::path data = synth("train_short", 3);
  const fs::path dir = data.parent_path();
  put(dir / "model.json", tiny_model());
  const auto r = run_cli({"train", "--data", data.string(), "--model-config", (dir / "model.json").string(), "--out",
                      (dir / "run").string()});
  EXPECT_EQ(r.code, 2) << "default train window exceeds the tiny model";
  json t = tiny_train();
  put(dir / "train.json", t);
  const auto r2 = run_cli({"train", "--data", data.string(), "--model-config", (dir / "model.json").string(),
                       "--train-config", (dir / "train.json").string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r2.code, 3);
  const auto lines = json_lines(r2.err);
  ASSERT_GE(lines.size(), 2u);
  EXPECT_EQ(lines.front()["level"], "warning");
  EXPECT_EQ(lines.back()["kind"], "data");
}

TEST_F(CliTest, EvalOracleModeIsPerfect) {
  const fs::path data = synth("eval_oracle", 24);
  const fs::path out = data.parent_path() / "eval";
  const auto r = run_cli({"eval", "--use-gt-as-pred", "--data", data.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(slurp(out / "metrics.json"));
  EXPECT_DOUBLE_EQ(m["AP"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(m["AR"].get<double>(), 100.0);
  EXPECT_GT(m["num_ground_truths"].get<std::size_t>(), 0u);
  EXPECT_TRUE(fs::exists(out / "seq_0000" / "detections.csv"));
  EXPECT_TRUE(fs::exists(out / "seq_0000" / "confmaps.npy"));
}

TEST_F(CliTest, EvalReportEchoesEveryConfigField) {
  const fs::path data = synth("eval_echo", 16);
  const fs::path dir = data.parent_path();
  eval::EvalConfig cfg;
  cfg.peak_threshold = 0.2;
  cfg.lnms_threshold = 0.4;
  cfg.kappa = {0.7, 1.1, 1.9};
  put(dir / "eval.json", cfg);
  const auto r = run_cli({"eval", "--use-gt-as-pred", "--data", data.string(), "--eval-config",
                      (dir / "eval.json").string(), "--out", (dir / "eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(slurp(dir / "eval" / "metrics.json"));
  const json expect = cfg;
  ASSERT_EQ(m["config"].size(), expect.size());
  for (const auto& [k, v] : expect.items()) EXPECT_EQ(m["config"][k], v) << k;
  EXPECT_EQ(json_lines(r.out).front()["effective_config"]["eval_config"], expect);
}

TEST_F(CliTest, EvalZeroWeightCheckpointScoresZero) {
  const fs::path data = synth("eval_zero", 8);
  const fs::path dir = data.parent_path();
  const ModelConfig m = tiny_model();
  TrainConfig tc = tiny_train();
  auto state = init_train_state<float>(m, tc);
  for (auto& [path, p] : state.params) p.value().fill(0.0f);
  save_checkpoint(dir / "zero.mradckpt", Checkpoint<float>{m, tc, state});
  const auto r = run_cli({"eval", "--checkpoint", (dir / "zero.mradckpt").string(), "--data", data.string(), "--out",
                      (dir / "eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json res = json::parse(slurp(dir / "eval" / "metrics.json"));
  EXPECT_EQ(res["AP"].get<double>(), 0.0);
  EXPECT_EQ(res["AR"].get<double>(), 0.0);
  EXPECT_GT(res["num_ground_truths"].get<std::size_t>(), 0u);
}

TEST_F(CliTest, EvalWithoutCheckpointIsConfigError) {
  const fs::path data = synth("eval_missing", 4);
  const auto r = run_cli({"eval", "--data", data.string(), "--out", (data.parent_path() / "e").string()});
  EXPECT_EQ(r.code, 2);
  const auto r2 = run_cli({"eval", "--checkpoint", (data.parent_path() / "none.mradckpt").string(), "--data",
                       data.string(), "--out", (data.parent_path() / "e").string()});
  EXPECT_EQ(r2.code, 3);
}

TEST_F(CliTest, InferWritesMapsAndDetections) {
  const fs::path data = synth("infer", 8);
  const fs::path dir = data.parent_path();
  const ModelConfig m = tiny_model();
  TrainConfig tc = tiny_train();
  save_checkpoint(dir / "init.mradckpt", Checkpoint<float>{m, tc, init_train_state<float>(m, tc)});
  const auto r = run_cli({"infer", "--checkpoint", (dir / "init.mradckpt").string(), "--data", data.string(), "--out",
                      (dir / "inf").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto maps = npy::read_float(dir / "inf" / "seq_0001" / "confmaps.npy");
  EXPECT_EQ(maps.shape(), (Shape{8, 3, 32, 32}));
  EXPECT_TRUE(fs::exists(dir / "inf" / "inference.json"));
}

TEST_F(CliTest, InfoDefaultWithinBudgetAndPure) {
  const auto a = run_cli({"info"}), b = run_cli({"info"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const json rep = json::parse(a.out);
  EXPECT_TRUE(rep["within_budget"]["params"].get<bool>());
  EXPECT_TRUE(rep["within_budget"]["gflops"].get<bool>());
  EXPECT_FALSE(rep["notes"].empty());

  const fs::path dir = scratch_dir("info_monotone");
  ModelConfig wide;
  for (auto& c : wide.stage_channels) c *= 2;
  wide.embed_channels *= 2;
  put(dir / "wide.json", wide);
  const auto w = run_cli({"info", "--model-config", (dir / "wide.json").string(), "--out", (dir / "o").string()});
  ASSERT_EQ(w.code, 0) << w.err;
  const json wrep = json::parse(slurp(dir / "o" / "info.json"));
  EXPECT_GT(wrep["params"].get<std::size_t>(), rep["params"].get<std::size_t>());
  EXPECT_GT(wrep["flops"].get<std::uint64_t>(), rep["flops"].get<std::uint64_t>());
}

TEST_F(CliTest, PlotGoldenBytes) {
  const fs::path dir = scratch_dir("plot_golden");
  npy::write(dir / "maps.npy", Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{0.0f, 0.5f, 1.0f, 0.25f}));
  std::ofstream(dir / "dets.csv") << "frame,class,range_bin,azimuth_bin,score\n0,0,1,0,1.000000\n";
  const auto r = run_cli({"plot", "--detections", (dir / "dets.csv").string(), "--confmaps", (dir / "maps.npy").string(),
                      "--out", (dir / "png").string(), "--scale", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  // 4x4 RGB canvas, red channel from the map, white cross at pixel (1,3),
  // encoded by an independent zlib-level-9 writer.
  const std::string golden_hex =
      "89504e470d0a1a0a0000000d4948445200000004000000040802000000269309290000001f4944415478da6360008306300281ffffff43"
      "39ffc11c0706060788301c00005df7156e1421cc400000000049454e44ae426082";
  std::string hex;
  char byte[3];
  for (unsigned char c : slurp(dir / "png" / "frame_000000.png")) {
    std::snprintf(byte, sizeof byte, "%02x", c);
    hex += byte;
  }
  EXPECT_EQ(hex, golden_hex);
}

TEST_F(CliTest, PlotDecodesToHeatmapAndMarker) {
  const fs::path dir = scratch_dir("plot_decode");
  Tensor<float> maps(Shape{2, 3, 4, 5}, 0.0f);
  maps.at(1, 2, 3, 4) = 1.0f;
  maps.at(1, 0, 0, 0) = 0.2f;
  npy::write(dir / "maps.npy", maps);
  std::ofstream(dir / "none.csv") << "frame,class,range_bin,azimuth_bin,score\n";
  std::ofstream(dir / "one.csv") << "frame,class,range_bin,azimuth_bin,score\n1,0,2,1,0.5\n";
  for (const std::string name : {"none", "one"})
    ASSERT_EQ(run_cli({"plot", "--detections", (dir / (name + ".csv")).string(), "--confmaps",
                   (dir / "maps.npy").string(), "--out", (dir / name).string(), "--scale", "1"})
                  .code,
              0);
  auto decode = [](const std::string& png) {
    EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
    const std::size_t idat = png.find("IDAT");
    const std::size_t len = (std::size_t(std::uint8_t(png[idat - 4])) << 24) |
                            (std::size_t(std::uint8_t(png[idat - 3])) << 16) |
                            (std::size_t(std::uint8_t(png[idat - 2])) << 8) | std::uint8_t(png[idat - 1]);
    std::string raw(4 * (5 * 3 + 1), '\0');
    uLongf n = raw.size();
    EXPECT_EQ(uncompress(reinterpret_cast<Bytef*>(raw.data()), &n,
                         reinterpret_cast<const Bytef*>(png.data() + idat + 4), len),
              Z_OK);
    EXPECT_EQ(n, raw.size());
    return raw;
  };
  auto pixel = [](const std::string& raw, std::size_t row, std::size_t col) {
    const char* p = raw.data() + row * 16 + 1 + col * 3;
    return std::array<int, 3>{std::uint8_t(p[0]), std::uint8_t(p[1]), std::uint8_t(p[2])};
  };
  const std::string plain = decode(slurp(dir / "none" / "frame_000001.png"));
  EXPECT_EQ(pixel(plain, 3, 4), (std::array<int, 3>{0, 0, 255}));
  EXPECT_EQ(pixel(plain, 0, 0), (std::array<int, 3>{51, 0, 0}));
  EXPECT_EQ(pixel(plain, 2, 1), (std::array<int, 3>{0, 0, 0}));
  const std::string marked = decode(slurp(dir / "one" / "frame_000001.png"));
  for (auto [r, c] : {std::pair{2, 1}, {1, 1}, {3, 1}, {2, 0}, {2, 2}})
    EXPECT_EQ(pixel(marked, r, c), (std::array<int, 3>{255, 255, 255}));
  EXPECT_EQ(pixel(marked, 3, 4), (std::array<int, 3>{0, 0, 255}));
  // Frame 0 carries no detection in either run.
  EXPECT_EQ(slurp(dir / "none" / "frame_000000.png"), slurp(dir / "one" / "frame_000000.png"));
}

TEST_F(CliTest, PlotRejectsDetectionOutsideMaps) {
  const fs::path dir = scratch_dir("plot_bad");
  npy::write(dir / "maps.npy", Tensor<float>(Shape{1, 1, 2, 2}, 0.0f));
  std::ofstream(dir / "d.csv") << "frame,class,range_bin,azimuth_bin,score\n0,0,5,0,1.0\n";
  const auto r = run_cli({"plot", "--detections", (dir / "d.csv").string(), "--confmaps", (dir / "maps.npy").string(),
                      "--out", (dir / "png").string()});
  EXPECT_EQ(r.code, 3);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"synth", "--frames", "abc"}).code, 2);
  EXPECT_EQ(run_cli({"synth"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}
