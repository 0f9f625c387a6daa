// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mradnet/checkpoint.hpp"
#include "mradnet/data.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/eval.hpp"
#include "mradnet/manifest.hpp"
#include "mradnet/model.hpp"
#include "mradnet/npy.hpp"
#include "mradnet/png.hpp"
#include "mradnet/train.hpp"

namespace mradnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

inline constexpr double kReferenceParamsMillions = 4.93;
inline constexpr double kReferenceGFlops = 32.79;

namespace detail {

inline json read_json_file(const fs::path& p, const char* what) {
  std::ifstream f(p);
  if (!f) throw ConfigError(std::string("cannot read ") + what + " '" + p.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " '" + p.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const json& j) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

/// Collects flag -> key bindings so that flags given on the command line
/// override the same keys from a --config file.
class FlagSet {
public:
  explicit FlagSet(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with defaults for any of this command's flags");
  }

  template <class T>
  CLI::Option* option(const std::string& flag, const std::string& key, T& storage, const std::string& help) {
    auto* o = app_->add_option(flag, storage, help);
    keys_.insert(key);
    appliers_.push_back([o, key, &storage](json& j) {
      if (o->count()) j[key] = storage;
    });
    return o;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, bool& storage, const std::string& help) {
    auto* o = app_->add_flag(flag, storage, help);
    keys_.insert(key);
    appliers_.push_back([o, key, &storage](json& j) {
      if (o->count()) j[key] = storage;
    });
    return o;
  }

  /// Config-file values overridden by explicit flags.
  json merged() const {
    json j = json::object();
    if (!config_path_.empty()) {
      j = read_json_file(config_path_, "command config");
      if (!j.is_object()) throw ConfigError("command config must be a JSON object");
      std::vector<std::string> problems;
      for (const auto& [k, _] : j.items())
        if (!keys_.count(k)) problems.push_back("command config: unknown key '" + k + "'");
      if (!problems.empty()) throw ConfigError(std::move(problems));
    }
    for (const auto& a : appliers_) a(j);
    return j;
  }

  const std::string& config_path() const { return config_path_; }

private:
  CLI::App* app_;
  std::string config_path_;
  std::set<std::string> keys_;
  std::vector<std::function<void(json&)>> appliers_;
};

template <class T>
T value_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("setting '" + key + "': " + e.what());
  }
}

inline std::string required(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing required setting '" + key + "' (flag --" + key + ")");
  return value_or<std::string>(j, key, "");
}

/// Seed from settings, else MRADNET_SEED, else 0. Returns the value and its source.
inline std::pair<std::uint64_t, std::string> resolve_seed(const json& settings, const std::string& key = "seed") {
  if (settings.contains(key)) return {value_or<std::uint64_t>(settings, key, 0), "flag or config"};
  if (const char* env = std::getenv("MRADNET_SEED")) {
    const std::string s = env;
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("MRADNET_SEED must be a non-negative integer, got '" + s + "'");
    return {std::stoull(s), "MRADNET_SEED"};
  }
  return {0, "default"};
}

inline std::vector<std::string> class_names_for(std::size_t k) {
  std::vector<std::string> names = data::default_class_names();
  names.resize(std::min(names.size(), k));
  for (std::size_t i = names.size(); i < k; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

inline std::vector<data::Sequence> load_dataset(const fs::path& root, std::size_t chirps,
                                                const std::vector<std::string>& names) {
  std::vector<data::Sequence> seqs;
  for (const auto& dir : data::list_sequences(root)) seqs.push_back(data::load_cruw_sequence(dir, chirps, names));
  return seqs;
}

inline void check_frame_shape(const std::vector<data::Sequence>& seqs, const ModelConfig& m) {
  for (const auto& s : seqs)
    if (s.frames.dim(2) != m.height || s.frames.dim(3) != m.width)
      throw DataError("sequence '" + s.name + "' has " + std::to_string(s.frames.dim(2)) + "x" +
                      std::to_string(s.frames.dim(3)) + " bins but the model expects " + std::to_string(m.height) +
                      "x" + std::to_string(m.width));
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw DataError("cannot create directory " + p.string());
}

inline void warn(std::ostream& err, const std::string& msg) {
  err << json{{"level", "warning"}, {"message", msg}}.dump() << '\n';
}

inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_train_log(const fs::path& p, const std::vector<LogRow>& rows) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << "step,epoch,lr,loss\n";
  for (const auto& r : rows) f << r.step << ',' << r.epoch << ',' << csv_double(r.lr) << ',' << csv_double(r.loss) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each takes merged settings and returns an exit code; errors
// propagate as exceptions and are mapped to exit codes by run().

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> argv;
};

inline int cmd_synth(const json& s, Context& ctx) {
  const fs::path out = detail::required(s, "out");
  const auto sequences = detail::value_or<std::size_t>(s, "sequences", 2);
  const auto frames = detail::value_or<std::size_t>(s, "frames", 40);
  const auto objects = detail::value_or<std::size_t>(s, "objects", 3);
  const auto height = detail::value_or<std::size_t>(s, "height", 128);
  const auto width = detail::value_or<std::size_t>(s, "width", 128);
  const auto noise = detail::value_or<double>(s, "noise", 0.05);
  const bool force = detail::value_or<bool>(s, "force", false);
  const auto [seed, seed_source] = detail::resolve_seed(s);
  std::vector<std::string> problems;
  if (sequences < 1) problems.push_back("sequences must be at least 1");
  if (frames < 1) problems.push_back("frames must be at least 1");
  if (objects < 1) problems.push_back("objects must be at least 1");
  if (noise < 0) problems.push_back("noise must be non-negative");
  if (!problems.empty()) throw ConfigError(std::move(problems));

  json effective = s;
  effective["seed"] = seed;
  effective["sequences"] = sequences;
  effective["frames"] = frames;
  effective["objects"] = objects;
  effective["height"] = height;
  effective["width"] = width;
  effective["noise"] = noise;
  effective["force"] = force;
  ctx.out << json{{"command", "synth"}, {"effective_config", effective}}.dump() << '\n';

  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw ConfigError("output directory '" + out.string() + "' is not empty (use --force)");
    for (const auto& e : fs::directory_iterator(out)) {
      const auto name = e.path().filename().string();
      if ((e.is_directory() && name.rfind("seq_", 0) == 0) || name == "run_manifest.json" ||
          name == "effective_config.json")
        fs::remove_all(e.path());
    }
  }
  detail::ensure_dir(out);
  manifest::RunManifest man;
  man.command = "synth";
  man.argv = ctx.argv;
  man.seeds = {{"seed", seed}, {"source", seed_source}};
  man.effective_config = effective;
  man.output_dir = out.string();

  data::RandomSceneOptions opt;
  opt.num_frames = frames;
  opt.height = height;
  opt.width = width;
  opt.num_objects = objects;
  opt.noise_std = noise;
  for (std::size_t i = 0; i < sequences; ++i) {
    const std::uint64_t scene_seed = seed * 1000003ULL + i;
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu", i);
    const auto spec = data::random_scene(opt, scene_seed);
    data::write_cruw_sequence(out / name, data::render_sequence(spec, name));
  }
  detail::write_json_file(out / "effective_config.json", effective);
  man.input_hashes = json::object();
  manifest::write(out, man);
  ctx.out << json{{"sequences", sequences}, {"frames", frames}, {"out", out.string()}}.dump() << '\n';
  return kOk;
}

inline int cmd_train(const json& s, Context& ctx) {
  const fs::path data_dir = detail::required(s, "data");
  const fs::path out = detail::required(s, "out");
  const bool resume = detail::value_or<bool>(s, "resume", false);
  const auto stop_after = detail::value_or<std::size_t>(s, "stop_after", 0);
  const bool holdout = detail::value_or<bool>(s, "holdout", false);
  const std::string model_path = detail::value_or<std::string>(s, "model_config", "");
  const std::string train_path = detail::value_or<std::string>(s, "train_config", "");

  // Configs are validated before any data is touched.
  std::optional<Checkpoint<float>> restored;
  const fs::path last_ckpt = out / "last.mradckpt";
  if (resume) {
    if (!fs::exists(last_ckpt)) throw ConfigError("--resume given but no checkpoint at " + last_ckpt.string());
    restored = load_checkpoint<float>(last_ckpt);
  }
  ModelConfig model;
  if (!model_path.empty()) model = detail::read_json_file(model_path, "model config").get<ModelConfig>();
  else if (restored) model = restored->model;
  if (restored && json(model) != json(restored->model))
    throw ConfigError("model config differs from the checkpoint being resumed");
  json train_json = restored ? json(restored->train) : json::object();
  if (!train_path.empty()) train_json = detail::read_json_file(train_path, "train config");
  if (s.contains("epochs")) train_json["epochs"] = s["epochs"];
  if (s.contains("batch_size")) train_json["batch_size"] = s["batch_size"];
  if (s.contains("lr")) train_json["lr0"] = s["lr"];
  const bool seed_given = s.contains("seed") || train_json.contains("seed");
  if (s.contains("seed")) train_json["seed"] = s["seed"];
  std::string seed_source = "train config";
  if (!seed_given) {
    const auto [seed, src] = detail::resolve_seed(json::object());
    train_json["seed"] = seed;
    seed_source = src;
  } else if (s.contains("seed")) {
    seed_source = "flag or config";
  }
  TrainConfig tc = train_json.get<TrainConfig>();
  {
    auto problems = model.problems();
    for (auto& p : tc.problems()) problems.push_back(p);
    if (tc.window != model.num_frames)
      problems.push_back("train window (" + std::to_string(tc.window) + ") must equal model num_frames (" +
                         std::to_string(model.num_frames) + ")");
    if (tc.gt_sigma.size() < model.num_classes) problems.push_back("gt_sigma needs one entry per class");
    if (!problems.empty()) throw ConfigError(std::move(problems));
  }
  json effective = s;
  effective["model_config"] = model;
  effective["train_config"] = tc;
  ctx.out << json{{"command", "train"}, {"effective_config", effective}}.dump() << '\n';

  const auto names = detail::class_names_for(model.num_classes);
  auto sequences = detail::load_dataset(data_dir, model.num_chirps, names);
  std::vector<std::string> held_out;
  if (holdout) {
    const auto [train_idx, test_idx] = data::split_train_test(sequences.size(), tc.seed);
    std::vector<data::Sequence> kept;
    for (auto i : train_idx) kept.push_back(std::move(sequences[i]));
    for (auto i : test_idx) held_out.push_back(sequences[i].name);
    sequences = std::move(kept);
  }
  detail::check_frame_shape(sequences, model);
  data::WindowDataset dataset(sequences, model.num_classes, tc.gt_sigma, tc.window, tc.stride);
  for (const auto& w : dataset.warnings()) detail::warn(ctx.err, w);
  if (dataset.empty()) throw DataError("no training windows: every sequence is shorter than the window");

  detail::ensure_dir(out);
  manifest::RunManifest man;
  man.command = "train";
  man.argv = ctx.argv;
  man.config_paths = {{"model_config", model_path}, {"train_config", train_path}};
  man.seeds = {{"seed", tc.seed}, {"source", seed_source}};
  man.input_hashes = {{"data", manifest::content_hash(data_dir, {"run_manifest.json", "effective_config.json"})}};
  if (!model_path.empty()) man.input_hashes["model_config"] = manifest::content_hash(model_path);
  if (!train_path.empty()) man.input_hashes["train_config"] = manifest::content_hash(train_path);
  if (restored) man.input_hashes["resumed_checkpoint"] = manifest::content_hash(last_ckpt);
  man.effective_config = effective;
  man.effective_config["held_out_sequences"] = held_out;
  man.output_dir = out.string();
  detail::write_json_file(out / "effective_config.json", man.effective_config);

  TrainState<float> state = restored ? std::move(restored->state) : init_train_state<float>(model, tc);
  if (restored) check_params_match(state.params, model);
  TrainHooks hooks;
  hooks.stop_after_epoch = stop_after ? state.epoch + stop_after : 0;
  hooks.on_epoch_end = [&](std::size_t epoch) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : state.history)
      if (r.epoch + 1 == epoch) {
        sum += r.loss;
        ++n;
      }
    Checkpoint<float> ck{model, tc, state};
    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_epoch_%03zu.mradckpt", epoch);
    save_checkpoint(out / name, ck);
    save_checkpoint(last_ckpt, ck);
    detail::write_train_log(out / "train_log.csv", state.history);
    ctx.out << json{{"epoch", epoch}, {"step", state.step}, {"mean_loss", n ? sum / n : 0.0}}.dump() << '\n';
  };
  train(state, model, dataset, tc, hooks);
  detail::write_train_log(out / "train_log.csv", state.history);
  manifest::write(out, man);
  ctx.out << json{{"epochs_completed", state.epoch}, {"steps", state.step}, {"checkpoint", last_ckpt.string()}}.dump()
          << '\n';
  return kOk;
}

namespace detail {

inline eval::EvalConfig load_eval_config(const json& s) {
  const std::string path = value_or<std::string>(s, "eval_config", "");
  eval::EvalConfig cfg;
  if (!path.empty()) cfg = read_json_file(path, "eval config").get<eval::EvalConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace detail

/// Shared body of eval and infer.
inline int run_detection(const json& s, Context& ctx, bool score) {
  const std::string command = score ? "eval" : "infer";
  const fs::path data_dir = detail::required(s, "data");
  const fs::path out = detail::required(s, "out");
  const bool oracle = score && detail::value_or<bool>(s, "use_gt_as_pred", false);
  const std::string ckpt_path = detail::value_or<std::string>(s, "checkpoint", "");
  if (!oracle && ckpt_path.empty()) throw ConfigError("missing required setting 'checkpoint' (flag --checkpoint)");
  const eval::EvalConfig ecfg = detail::load_eval_config(s);

  std::optional<Checkpoint<float>> ck;
  if (!oracle) {
    ck = load_checkpoint<float>(ckpt_path);
    check_params_match(ck->state.params, ck->model);
    ck->state.params.set_trainable(false);
  }
  const std::size_t K = ck ? ck->model.num_classes : ecfg.kappa.size();
  if (ecfg.kappa.size() < K) throw ConfigError("eval config lists fewer kappa values than classes");
  const std::size_t window = ck ? ck->train.window : 16, stride = ck ? ck->train.stride : 4;
  const std::vector<double> sigmas = ck ? ck->train.gt_sigma : data::default_gt_sigmas();

  json effective = s;
  effective["eval_config"] = ecfg;
  effective["window"] = window;
  effective["stride"] = stride;
  ctx.out << json{{"command", command}, {"effective_config", effective}}.dump() << '\n';

  const auto names = detail::class_names_for(K);
  const std::size_t chirps = ck ? ck->model.num_chirps : 4;
  const auto sequences = detail::load_dataset(data_dir, chirps, names);
  if (ck) detail::check_frame_shape(sequences, ck->model);
  detail::ensure_dir(out);

  manifest::RunManifest man;
  man.command = command;
  man.argv = ctx.argv;
  man.config_paths = {{"eval_config", detail::value_or<std::string>(s, "eval_config", "")},
                      {"checkpoint", ckpt_path}};
  man.input_hashes = {{"data", manifest::content_hash(data_dir, {"run_manifest.json", "effective_config.json"})}};
  if (!ckpt_path.empty()) man.input_hashes["checkpoint"] = manifest::content_hash(ckpt_path);
  man.effective_config = effective;
  man.output_dir = out.string();
  detail::write_json_file(out / "effective_config.json", effective);

  eval::EvalAccumulator acc(ecfg);
  json per_sequence = json::array();
  for (const auto& seq : sequences) {
    const std::size_t T = seq.num_frames(), H = seq.frames.dim(2), W = seq.frames.dim(3);
    std::vector<std::size_t> frames;
    Tensor<float> maps;
    if (oracle) {
      maps = data::gt_confmap(seq.annotations, T, K, H, W, sigmas);
      for (auto start : data::window_starts(T, window, stride))
        for (std::size_t f = window - stride; f < window; ++f) frames.push_back(start + f);
    } else {
      maps = eval::sequence_confmaps(
          [&](const Tensor<float>& x) { return predict(x, ck->state.params, ck->model); }, seq, K, &frames, window,
          stride);
    }
    if (frames.empty()) detail::warn(ctx.err, "sequence '" + seq.name + "' is shorter than the window; skipped");
    eval::SequenceEval r;
    if (score) {
      r = eval::score_confmaps(std::move(maps), frames, seq.annotations, acc);
    } else {
      for (auto f : frames) {
        auto dets = eval::detect_frame(std::span<const float>(maps.data() + f * K * H * W, K * H * W), K, H, W, f, ecfg);
        r.detections.insert(r.detections.end(), dets.begin(), dets.end());
      }
      r.frames = frames;
      r.confmaps = std::move(maps);
    }
    const fs::path sd = out / seq.name;
    detail::ensure_dir(sd);
    {
      std::ofstream f(sd / "detections.csv", std::ios::trunc);
      eval::write_detections_csv(f, r.detections);
    }
    npy::write(sd / "confmaps.npy", r.confmaps);
    per_sequence.push_back({{"name", seq.name}, {"scored_frames", r.frames.size()}, {"detections", r.detections.size()}});
  }

  json report;
  if (score) {
    report = eval::report_json(acc.result(), ecfg);
    report["oracle"] = oracle;
    report["checkpoint"] = ckpt_path;
  } else {
    report = {{"config", ecfg}};
  }
  report["sequences"] = per_sequence;
  detail::write_json_file(out / (score ? "metrics.json" : "inference.json"), report);
  manifest::write(out, man);
  if (score)
    ctx.out << json{{"AP", report["AP"]}, {"AR", report["AR"]}, {"metrics", (out / "metrics.json").string()}}.dump()
            << '\n';
  else
    ctx.out << json{{"sequences", per_sequence.size()}, {"out", out.string()}}.dump() << '\n';
  return kOk;
}

/// Parameter and multiply-accumulate budget of a model configuration.
inline json info_report(const ModelConfig& m) {
  const std::size_t params = count_params(m);
  const std::uint64_t macs = count_flops(m);
  const double pm = static_cast<double>(params) / 1e6, gf = static_cast<double>(macs) / 1e9;
  const double dp = pm / kReferenceParamsMillions - 1.0, df = gf / kReferenceGFlops - 1.0;
  return {{"config", m},
          {"params", params},
          {"params_millions", pm},
          {"flops", macs},
          {"gflops", gf},
          {"flop_convention",
           "multiply-accumulate operations for one window at batch 1; norms, activations, softmax and "
           "interpolation are not counted"},
          {"reference", {{"params_millions", kReferenceParamsMillions}, {"gflops", kReferenceGFlops}}},
          {"relative_deviation", {{"params", dp}, {"gflops", df}}},
          {"within_budget", {{"params", std::abs(dp) <= 0.25}, {"gflops", std::abs(df) <= 0.30}}},
          {"notes",
           {"The reference budget does not come with a published stage plan. The default plan (stage widths "
            "64/128/256, encoder depths 2/2/4, decoder depths 2/2, SepConv mixers in the shallow stages and "
            "attention in the deepest) was chosen to land close to it.",
            "Remaining differences come from the unpublished layer widths, depthwise kernel sizes and "
            "the head design."}}};
}

inline int cmd_info(const json& s, Context& ctx) {
  const std::string path = detail::value_or<std::string>(s, "model_config", "");
  ModelConfig m;
  if (!path.empty()) m = detail::read_json_file(path, "model config").get<ModelConfig>();
  m.validate();
  const json report = info_report(m);
  ctx.out << report.dump(2) << '\n';
  const std::string out = detail::value_or<std::string>(s, "out", "");
  if (!out.empty()) {
    detail::ensure_dir(out);
    detail::write_json_file(fs::path(out) / "info.json", report);
    manifest::RunManifest man;
    man.command = "info";
    man.argv = ctx.argv;
    man.config_paths = {{"model_config", path}};
    if (!path.empty()) man.input_hashes = {{"model_config", manifest::content_hash(path)}};
    man.effective_config = s;
    man.effective_config["model_config"] = m;
    man.output_dir = out;
    manifest::write(out, man);
  }
  return kOk;
}

inline int cmd_plot(const json& s, Context& ctx) {
  const fs::path det_path = detail::required(s, "detections");
  const fs::path maps_path = detail::required(s, "confmaps");
  const fs::path out = detail::required(s, "out");
  const auto scale = detail::value_or<std::size_t>(s, "scale", 4);
  const auto frames_sel = detail::value_or<std::vector<std::size_t>>(s, "frames", {});
  if (scale < 1) throw ConfigError("scale must be at least 1");
  json effective = s;
  effective["scale"] = scale;
  ctx.out << json{{"command", "plot"}, {"effective_config", effective}}.dump() << '\n';

  const Tensor<float> maps = npy::read_float(maps_path);
  if (maps.rank() != 4) throw DataError("confmaps must be (frames,classes,H,W), got " + shape_str(maps.shape()));
  const std::size_t T = maps.dim(0), K = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  std::ifstream df(det_path);
  if (!df) throw DataError("cannot read " + det_path.string());
  const auto dets = eval::read_detections_csv(df);
  for (const auto& d : dets)
    if (d.frame >= T || d.class_id >= K || d.range_bin >= H || d.azimuth_bin >= W)
      throw DataError("detection at frame " + std::to_string(d.frame) + " lies outside the confidence maps");
  std::vector<std::size_t> frames = frames_sel;
  if (frames.empty())
    for (std::size_t f = 0; f < T; ++f) frames.push_back(f);
  detail::ensure_dir(out);
  for (auto f : frames) {
    if (f >= T) throw ConfigError("frame " + std::to_string(f) + " outside the confidence maps");
    auto img = png::heatmap(maps.data() + f * K * H * W, K, H, W, scale);
    for (const auto& d : dets)
      if (d.frame == f) png::draw_marker(img, d.range_bin, d.azimuth_bin, scale, std::max<std::size_t>(1, scale));
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.png", f);
    png::write(out / name, img);
  }
  manifest::RunManifest man;
  man.command = "plot";
  man.argv = ctx.argv;
  man.input_hashes = {{"detections", manifest::content_hash(det_path)}, {"confmaps", manifest::content_hash(maps_path)}};
  man.effective_config = effective;
  man.output_dir = out.string();
  manifest::write(out, man);
  ctx.out << json{{"images", frames.size()}, {"out", out.string()}}.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

inline void report_error(std::ostream& err, const char* kind, const std::string& message,
                         const std::vector<std::string>& problems = {}) {
  json j{{"level", "error"}, {"kind", kind}, {"message", message}};
  if (!problems.empty()) j["problems"] = problems;
  err << j.dump() << '\n';
}

/// Entry point of the `mradnet` command. Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mRadNet radar object detection toolkit", "mradnet"};
  app.require_subcommand(1);
  Context ctx{out, err, args};

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset in CRUW layout");
  detail::FlagSet synth_flags(synth);
  std::string s_out;
  std::size_t s_seq = 0, s_frames = 0, s_objects = 0, s_h = 0, s_w = 0;
  std::uint64_t s_seed = 0;
  double s_noise = 0;
  bool s_force = false;
  synth_flags.option("--out", "out", s_out, "Output directory");
  synth_flags.option("--sequences", "sequences", s_seq, "Number of sequences (default 2)");
  synth_flags.option("--frames", "frames", s_frames, "Frames per sequence (default 40)");
  synth_flags.option("--objects", "objects", s_objects, "Objects per sequence (default 3)");
  synth_flags.option("--seed", "seed", s_seed, "Seed (falls back to MRADNET_SEED)");
  synth_flags.option("--height", "height", s_h, "Range bins (default 128)");
  synth_flags.option("--width", "width", s_w, "Azimuth bins (default 128)");
  synth_flags.option("--noise", "noise", s_noise, "Complex noise standard deviation (default 0.05)");
  synth_flags.flag("--force", "force", s_force, "Replace earlier synth output in a non-empty directory");

  auto* trn = app.add_subcommand("train", "Train a model");
  detail::FlagSet train_flags(trn);
  std::string t_data, t_model, t_train, t_out;
  std::size_t t_epochs = 0, t_batch = 0, t_stop = 0;
  double t_lr = 0;
  std::uint64_t t_seed = 0;
  bool t_resume = false, t_holdout = false;
  train_flags.option("--data", "data", t_data, "Dataset root");
  train_flags.option("--model-config", "model_config", t_model, "Model config JSON");
  train_flags.option("--train-config", "train_config", t_train, "Train config JSON");
  train_flags.option("--out", "out", t_out, "Output directory");
  train_flags.option("--epochs", "epochs", t_epochs, "Override epochs");
  train_flags.option("--batch-size", "batch_size", t_batch, "Override batch size");
  train_flags.option("--lr", "lr", t_lr, "Override initial learning rate");
  train_flags.option("--seed", "seed", t_seed, "Override seed (falls back to MRADNET_SEED)");
  train_flags.option("--stop-after", "stop_after", t_stop, "Stop after this many epochs in this run");
  train_flags.flag("--resume", "resume", t_resume, "Resume from <out>/last.mradckpt");
  train_flags.flag("--holdout", "holdout", t_holdout, "Train on the 9:1 training split only");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  detail::FlagSet eval_flags(ev);
  std::string e_ckpt, e_data, e_cfg, e_out;
  bool e_oracle = false;
  eval_flags.option("--checkpoint", "checkpoint", e_ckpt, "Checkpoint file");
  eval_flags.option("--data", "data", e_data, "Dataset root");
  eval_flags.option("--eval-config", "eval_config", e_cfg, "Eval config JSON");
  eval_flags.option("--out", "out", e_out, "Output directory");
  eval_flags.flag("--use-gt-as-pred", "use_gt_as_pred", e_oracle, "Score ground-truth maps instead of a model");

  auto* inf = app.add_subcommand("infer", "Run a checkpoint and dump confidence maps and detections");
  detail::FlagSet infer_flags(inf);
  std::string i_ckpt, i_data, i_cfg, i_out;
  infer_flags.option("--checkpoint", "checkpoint", i_ckpt, "Checkpoint file");
  infer_flags.option("--data", "data", i_data, "Dataset root");
  infer_flags.option("--eval-config", "eval_config", i_cfg, "Detection settings (eval config JSON)");
  infer_flags.option("--out", "out", i_out, "Output directory");

  auto* inf_cmd = app.add_subcommand("info", "Report parameter and FLOP counts");
  detail::FlagSet info_flags(inf_cmd);
  std::string n_model, n_out;
  info_flags.option("--model-config", "model_config", n_model, "Model config JSON (default config if omitted)");
  info_flags.option("--out", "out", n_out, "Optional output directory for info.json and manifest");

  auto* plot = app.add_subcommand("plot", "Render confidence maps with detection markers as PNG");
  detail::FlagSet plot_flags(plot);
  std::string p_det, p_maps, p_out;
  std::size_t p_scale = 0;
  std::vector<std::size_t> p_frames;
  plot_flags.option("--detections", "detections", p_det, "Detections CSV");
  plot_flags.option("--confmaps", "confmaps", p_maps, "Confidence maps NPY (frames,classes,H,W)");
  plot_flags.option("--out", "out", p_out, "Output directory");
  plot_flags.option("--scale", "scale", p_scale, "Pixels per bin (default 4)");
  plot_flags.option("--frames", "frames", p_frames, "Frames to render (default all)");

  std::vector<const char*> argv;
  argv.push_back("mradnet");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands())
      if (e.get_name() == "CallForHelp") out << sub->help();
    report_error(err, "usage", e.what());
    return kConfigError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_flags.merged(), ctx);
    if (trn->parsed()) return cmd_train(train_flags.merged(), ctx);
    if (ev->parsed()) return run_detection(eval_flags.merged(), ctx, true);
    if (inf->parsed()) return run_detection(infer_flags.merged(), ctx, false);
    if (inf_cmd->parsed()) return cmd_info(info_flags.merged(), ctx);
    if (plot->parsed()) return cmd_plot(plot_flags.merged(), ctx);
  } catch (const ConfigError& e) {
    report_error(err, "config", e.what(), e.problems());
    return kConfigError;
  } catch (const NumericError& e) {
    report_error(err, "numeric", e.what());
    return kNumericError;
  } catch (const DataError& e) {
    report_error(err, "data", e.what());
    return kDataError;
  } catch (const ShapeError& e) {
    report_error(err, "data", e.what());
    return kDataError;
  } catch (const DomainError& e) {
    report_error(err, "data", e.what());
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, "data", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kFailure;
  }
  return kFailure;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace mradnet::cli
