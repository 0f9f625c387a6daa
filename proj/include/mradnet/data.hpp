// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mradnet/errors.hpp"
#include "mradnet/npy.hpp"
#include "mradnet/tensor.hpp"

namespace mradnet::data {

inline const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names{"pedestrian", "cyclist", "car"};
  return names;
}

/// Maps range/azimuth bins to metric coordinates. Bin 0 sits at range_min_m
/// and bin H-1 at range_max_m; azimuth bins span [-fov/2, +fov/2].
struct RadarGeometry {
  double range_min_m = 1.0;
  double range_max_m = 25.0;
  double azimuth_fov_rad = std::numbers::pi;

  double range_of_bin(double i, std::size_t bins) const {
    return range_min_m + i * (range_max_m - range_min_m) / static_cast<double>(bins - 1);
  }
  double azimuth_of_bin(double j, std::size_t bins) const {
    return -0.5 * azimuth_fov_rad + j * azimuth_fov_rad / static_cast<double>(bins - 1);
  }
  double range_to_bin(double r, std::size_t bins) const {
    return (r - range_min_m) / (range_max_m - range_min_m) * static_cast<double>(bins - 1);
  }
  double azimuth_to_bin(double a, std::size_t bins) const {
    return (a + 0.5 * azimuth_fov_rad) / azimuth_fov_rad * static_cast<double>(bins - 1);
  }
};

struct SceneObject {
  std::size_t class_id = 0;
  std::vector<std::pair<double, double>> trajectory;  // per frame (range m, azimuth rad)
  double radial_velocity = 0.0;                       // m/s
  double reflectivity = 1.0;
};

struct Annotation {
  std::size_t frame_index = 0;
  std::size_t class_id = 0;
  std::size_t range_bin = 0;
  std::size_t azimuth_bin = 0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct SequenceSpec {
  std::size_t num_frames = 40;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t chirps = 4;
  double noise_std = 0.05;
  std::uint64_t rng_seed = 0;
  std::vector<SceneObject> objects;
  double chirp_interval_s = 1.28e-4;  // spacing of the retained chirps
  double wavelength_m = 3.9e-3;       // 77 GHz band
  double psf_sigma_bins = 1.5;
  double frame_rate_hz = 30.0;
  RadarGeometry geometry;

  void validate() const {
    std::vector<std::string> p;
    if (chirps != 4) p.push_back("chirps must be 4");
    if (height < 2 || width < 2) p.push_back("height and width must be at least 2");
    if (noise_std < 0) p.push_back("noise_std must be non-negative");
    const double half = 0.5 * geometry.azimuth_fov_rad;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      const auto& obj = objects[o];
      if (obj.trajectory.size() != num_frames)
        p.push_back("object " + std::to_string(o) + ": trajectory length must equal num_frames");
      for (const auto& [r, a] : obj.trajectory) {
        if (r < geometry.range_min_m || r > geometry.range_max_m || a < -half || a > half) {
          p.push_back("object " + std::to_string(o) + ": trajectory leaves the radar field");
          break;
        }
      }
    }
    if (!p.empty()) throw ConfigError(std::move(p));
  }

  std::pair<std::size_t, std::size_t> bins_of(const SceneObject& obj, std::size_t t) const {
    const auto [r, a] = obj.trajectory[t];
    return {static_cast<std::size_t>(std::lround(geometry.range_to_bin(r, height))),
            static_cast<std::size_t>(std::lround(geometry.azimuth_to_bin(a, width)))};
  }
};

/// A radar sequence: frames (T,chirps,H,W,2) plus its annotations.
struct Sequence {
  std::string name;
  Tensor<float> frames;
  std::vector<Annotation> annotations;

  std::size_t num_frames() const { return frames.empty() ? 0 : frames.dim(0); }
};

/// Complex RA image of frame t for every chirp, shaped (chirps,H,W,2).
/// Each object contributes a Gaussian point-spread blob at its bin with
/// amplitude = reflectivity and a per-chirp Doppler rotation
/// exp(i 2 pi (2 v / lambda) k dt); circular white noise is added on top.
inline Tensor<float> render_rf_frame(const SequenceSpec& spec, std::size_t t) {
  if (t >= spec.num_frames) throw ConfigError("render_rf_frame: frame index out of range");
  const std::size_t H = spec.height, W = spec.width, K = spec.chirps;
  std::vector<std::complex<double>> img(K * H * W);
  const double two_pi = 2.0 * std::numbers::pi;
  const double inv2s2 = 1.0 / (2.0 * spec.psf_sigma_bins * spec.psf_sigma_bins);
  for (const auto& obj : spec.objects) {
    const auto [rb, ab] = spec.bins_of(obj, t);
    const double range = obj.trajectory[t].first;
    const double carrier = 2.0 * two_pi * range / spec.wavelength_m;
    const double doppler_hz = 2.0 * obj.radial_velocity / spec.wavelength_m;
    for (std::size_t k = 0; k < K; ++k) {
      const double phase = carrier + two_pi * doppler_hz * static_cast<double>(k) * spec.chirp_interval_s;
      const std::complex<double> rot = std::polar(obj.reflectivity, phase);
      for (std::size_t i = 0; i < H; ++i) {
        const double di = static_cast<double>(i) - static_cast<double>(rb);
        for (std::size_t j = 0; j < W; ++j) {
          const double dj = static_cast<double>(j) - static_cast<double>(ab);
          img[(k * H + i) * W + j] += rot * std::exp(-(di * di + dj * dj) * inv2s2);
        }
      }
    }
  }
  if (spec.noise_std > 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.rng_seed), static_cast<std::uint32_t>(spec.rng_seed >> 32),
                      static_cast<std::uint32_t>(t), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> n(0.0, spec.noise_std / std::numbers::sqrt2);
    for (auto& z : img) z += std::complex<double>(n(rng), n(rng));
  }
  Tensor<float> out(Shape{K, H, W, 2});
  for (std::size_t p = 0; p < img.size(); ++p) {
    out[2 * p] = static_cast<float>(img[p].real());
    out[2 * p + 1] = static_cast<float>(img[p].imag());
  }
  return out;
}

inline std::vector<Annotation> annotations_of(const SequenceSpec& spec) {
  std::vector<Annotation> out;
  for (std::size_t t = 0; t < spec.num_frames; ++t)
    for (const auto& obj : spec.objects) {
      const auto [rb, ab] = spec.bins_of(obj, t);
      out.push_back({t, obj.class_id, rb, ab});
    }
  return out;
}

inline Sequence render_sequence(const SequenceSpec& spec, std::string name = "synthetic") {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width, K = spec.chirps;
  Tensor<float> frames(Shape{spec.num_frames, K, H, W, 2});
  const std::size_t per = K * H * W * 2;
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    const auto f = render_rf_frame(spec, t);
    std::copy_n(f.data(), per, frames.data() + t * per);
  }
  return {std::move(name), std::move(frames), annotations_of(spec)};
}

struct RandomSceneOptions {
  std::size_t num_frames = 40;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t num_objects = 3;
  std::size_t num_classes = 3;
  double noise_std = 0.05;
  std::size_t margin_bins = 3;
  std::size_t min_separation_bins = 5;
  double max_azimuth_rate = 0.1;  // rad/s
  std::vector<double> class_reflectivity{0.6, 1.0, 1.6};
  // Radial speed band per class (m/s); the sign is drawn at random.
  std::vector<std::pair<double, double>> class_speed_mps{{0.5, 1.5}, {2.0, 3.5}, {4.5, 6.5}};
  double reflectivity_jitter = 0.05;
  RadarGeometry geometry;
};

/// Random scene whose objects stay inside the field (with a margin) and apart
/// from each other for the whole sequence. Objects take distinct classes while
/// there are classes left, then cycle.
inline SequenceSpec random_scene(const RandomSceneOptions& opt, std::uint64_t seed) {
  if (opt.class_reflectivity.size() < opt.num_classes || opt.class_speed_mps.size() < opt.num_classes)
    throw ConfigError("random_scene: class_reflectivity and class_speed_mps need one entry per class");
  if (opt.height <= 2 * opt.margin_bins + 1 || opt.width <= 2 * opt.margin_bins + 1)
    throw ConfigError("random_scene: grid too small for the requested margin");
  SequenceSpec spec;
  spec.num_frames = opt.num_frames;
  spec.height = opt.height;
  spec.width = opt.width;
  spec.noise_std = opt.noise_std;
  spec.rng_seed = seed;
  spec.geometry = opt.geometry;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto& g = opt.geometry;
  const double lo_r = g.range_of_bin(static_cast<double>(opt.margin_bins), opt.height);
  const double hi_r = g.range_of_bin(static_cast<double>(opt.height - 1 - opt.margin_bins), opt.height);
  const double lo_a = g.azimuth_of_bin(static_cast<double>(opt.margin_bins), opt.width);
  const double hi_a = g.azimuth_of_bin(static_cast<double>(opt.width - 1 - opt.margin_bins), opt.width);

  std::vector<std::size_t> classes(opt.num_objects);
  std::vector<std::size_t> order(opt.num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t o = 0; o < opt.num_objects; ++o) classes[o] = order[o % opt.num_classes];

  for (int attempt = 0; attempt < 10000 && spec.objects.size() < opt.num_objects; ++attempt) {
    SceneObject obj;
    obj.class_id = classes[spec.objects.size()];
    const auto [v_lo, v_hi] = opt.class_speed_mps[obj.class_id];
    obj.radial_velocity = (u01(rng) < 0.5 ? -1.0 : 1.0) * (v_lo + u01(rng) * (v_hi - v_lo));
    const double rate = (2.0 * u01(rng) - 1.0) * opt.max_azimuth_rate;
    const double r0 = lo_r + u01(rng) * (hi_r - lo_r);
    const double a0 = lo_a + u01(rng) * (hi_a - lo_a);
    obj.reflectivity = opt.class_reflectivity[obj.class_id] * (1.0 + (2.0 * u01(rng) - 1.0) * opt.reflectivity_jitter);
    bool ok = true;
    for (std::size_t t = 0; t < opt.num_frames && ok; ++t) {
      const double dt = static_cast<double>(t) / spec.frame_rate_hz;
      const double r = r0 + obj.radial_velocity * dt, a = a0 + rate * dt;
      if (r < lo_r || r > hi_r || a < lo_a || a > hi_a) ok = false;
      obj.trajectory.emplace_back(r, a);
    }
    if (!ok) continue;
    for (const auto& other : spec.objects) {
      for (std::size_t t = 0; t < opt.num_frames && ok; ++t) {
        const auto [r1, a1] = spec.bins_of(obj, t);
        const auto [r2, a2] = spec.bins_of(other, t);
        const std::size_t dr = r1 > r2 ? r1 - r2 : r2 - r1, da = a1 > a2 ? a1 - a2 : a2 - a1;
        if (std::max(dr, da) < opt.min_separation_bins) ok = false;
      }
      if (!ok) break;
    }
    if (ok) spec.objects.push_back(std::move(obj));
  }
  if (spec.objects.size() < opt.num_objects)
    throw ConfigError("random_scene: could not place " + std::to_string(opt.num_objects) + " separated objects");
  return spec;
}

/// Ground-truth confidence maps (F,K,H,W): per class, the max over objects of
/// exp(-((i-r)^2 + (j-a)^2) / (2 sigma_c^2)).
inline Tensor<float> gt_confmap(std::span<const Annotation> annotations, std::size_t num_frames,
                                std::size_t num_classes, std::size_t H, std::size_t W,
                                std::span<const double> sigma_per_class) {
  if (sigma_per_class.size() < num_classes) throw ConfigError("gt_confmap: need one sigma per class");
  for (std::size_t c = 0; c < num_classes; ++c)
    if (!(sigma_per_class[c] > 0)) throw ConfigError("gt_confmap: sigma must be positive");
  Tensor<float> out(Shape{num_frames, num_classes, H, W});
  for (const auto& a : annotations) {
    if (a.frame_index >= num_frames || a.class_id >= num_classes || a.range_bin >= H || a.azimuth_bin >= W)
      throw DataError("gt_confmap: annotation outside the map");
    const double inv = 1.0 / (2.0 * sigma_per_class[a.class_id] * sigma_per_class[a.class_id]);
    float* m = out.data() + (a.frame_index * num_classes + a.class_id) * H * W;
    for (std::size_t i = 0; i < H; ++i) {
      const double di = static_cast<double>(i) - static_cast<double>(a.range_bin);
      for (std::size_t j = 0; j < W; ++j) {
        const double dj = static_cast<double>(j) - static_cast<double>(a.azimuth_bin);
        const float v = static_cast<float>(std::exp(-(di * di + dj * dj) * inv));
        m[i * W + j] = std::max(m[i * W + j], v);
      }
    }
  }
  return out;
}

inline const std::vector<double>& default_gt_sigmas() {
  static const std::vector<double> s{2.0, 3.0, 4.0};
  return s;
}

// ---------------------------------------------------------------------------
// CRUW-style directory layout:
//   <seq>/RADAR_RA_H/<frame:06d>_<chirp:04d>.npy   (H,W,2) float32 or (H,W) complex
//   <seq>/annot.txt   "frame_index class_name range_bin azimuth_bin" per line

inline constexpr const char* kRadarDir = "RADAR_RA_H";
inline constexpr const char* kAnnotFile = "annot.txt";

inline std::size_t chirp_id(std::size_t k, std::size_t chirps) { return k * (256 / chirps); }

inline void write_cruw_sequence(const std::filesystem::path& dir, const Sequence& seq,
                                const std::vector<std::string>& class_names = default_class_names()) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / kRadarDir);
  const std::size_t T = seq.frames.dim(0), K = seq.frames.dim(1), H = seq.frames.dim(2), W = seq.frames.dim(3);
  const std::size_t per = H * W * 2;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      Tensor<float> img(Shape{H, W, 2});
      std::copy_n(seq.frames.data() + (t * K + k) * per, per, img.data());
      char name[32];
      std::snprintf(name, sizeof name, "%06zu_%04zu.npy", t, chirp_id(k, K));
      npy::write(dir / kRadarDir / name, img);
    }
  std::ofstream f(dir / kAnnotFile, std::ios::trunc);
  if (!f) throw DataError("cannot write annotations in " + dir.string());
  for (const auto& a : seq.annotations) {
    if (a.class_id >= class_names.size()) throw DataError("annotation class id has no name");
    f << a.frame_index << ' ' << class_names[a.class_id] << ' ' << a.range_bin << ' ' << a.azimuth_bin << '\n';
  }
}

inline std::vector<Annotation> parse_annotations(std::istream& in, const std::vector<std::string>& class_names,
                                                 std::size_t num_frames, std::size_t H, std::size_t W,
                                                 const std::string& where) {
  std::vector<Annotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    auto fail = [&](const std::string& why) {
      throw DataError(where + ":" + std::to_string(lineno) + ": " + why);
    };
    if (tok.size() != 4) fail("expected 'frame_index class_name range_bin azimuth_bin'");
    auto to_index = [&](const std::string& s, const char* what) {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        fail(std::string("malformed ") + what + " '" + s + "'");
      return static_cast<std::size_t>(std::stoull(s));
    };
    Annotation a;
    a.frame_index = to_index(tok[0], "frame index");
    auto it = std::find(class_names.begin(), class_names.end(), tok[1]);
    if (it == class_names.end()) fail("unknown class '" + tok[1] + "'");
    a.class_id = static_cast<std::size_t>(it - class_names.begin());
    a.range_bin = to_index(tok[2], "range bin");
    a.azimuth_bin = to_index(tok[3], "azimuth bin");
    if (a.frame_index >= num_frames) fail("frame index " + tok[0] + " out of range");
    if (a.range_bin >= H || a.azimuth_bin >= W)
      fail("bin (" + tok[2] + "," + tok[3] + ") out of range for " + std::to_string(H) + "x" + std::to_string(W));
    out.push_back(a);
  }
  return out;
}

/// Loads one sequence directory. Frames come back as (T,chirps,H,W,2) sorted
/// by frame index, chirps ordered by chirp id.
inline Sequence load_cruw_sequence(const std::filesystem::path& dir, std::size_t num_chirps = 4,
                                   const std::vector<std::string>& class_names = default_class_names()) {
  namespace fs = std::filesystem;
  const fs::path radar = dir / kRadarDir;
  if (!fs::is_directory(radar)) throw DataError("missing " + radar.string());
  std::map<std::size_t, std::map<std::size_t, fs::path>> files;
  std::set<std::size_t> chirp_ids;
  const std::regex pat(R"((\d+)_(\d+)\.npy)");
  for (const auto& e : fs::directory_iterator(radar)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (!std::regex_match(name, m, pat)) continue;
    const std::size_t frame = std::stoull(m[1]), chirp = std::stoull(m[2]);
    files[frame][chirp] = e.path();
    chirp_ids.insert(chirp);
  }
  if (files.empty()) throw DataError("no radar frames in " + radar.string());
  std::size_t expect = 0;
  for (const auto& [frame, chirps] : files) {
    if (frame != expect) throw DataError("missing frame " + std::to_string(expect) + " in " + radar.string());
    ++expect;
    for (std::size_t id : chirp_ids)
      if (!chirps.count(id))
        throw DataError("missing chirp file for frame " + std::to_string(frame) + ", chirp " + std::to_string(id) +
                        " in " + radar.string());
  }
  if (chirp_ids.size() != num_chirps)
    throw DataError("expected " + std::to_string(num_chirps) + " chirps per frame in " + radar.string() +
                    ", found " + std::to_string(chirp_ids.size()) + " distinct chirp ids");

  const std::size_t T = files.size();
  Tensor<float> frames;
  std::size_t H = 0, W = 0;
  for (const auto& [frame, chirps] : files) {
    std::size_t k = 0;
    for (const auto& [id, path] : chirps) {
      Tensor<float> img = npy::read_float(path);
      if (img.rank() != 3 || img.dim(2) != 2)
        throw DataError(path.string() + ": expected (H,W,2) real or (H,W) complex array, got " + shape_str(img.shape()));
      if (frames.empty()) {
        H = img.dim(0);
        W = img.dim(1);
        frames = Tensor<float>(Shape{T, num_chirps, H, W, 2});
      } else if (img.dim(0) != H || img.dim(1) != W) {
        throw DataError(path.string() + ": inconsistent image shape " + shape_str(img.shape()));
      }
      std::copy_n(img.data(), img.numel(), frames.data() + (frame * num_chirps + k) * H * W * 2);
      ++k;
    }
  }
  Sequence seq;
  seq.name = dir.filename().string();
  seq.frames = std::move(frames);
  const fs::path annot = dir / kAnnotFile;
  if (fs::exists(annot)) {
    std::ifstream in(annot);
    seq.annotations = parse_annotations(in, class_names, T, H, W, annot.string());
  }
  return seq;
}

/// Sequence subdirectories of a dataset root, sorted by name.
inline std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<fs::path> out;
  if (fs::is_directory(root / kRadarDir)) return {root};
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::is_directory(e.path() / kRadarDir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no sequences under " + root.string());
  return out;
}

// ---------------------------------------------------------------------------
// Sliding windows.

inline std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> out;
  if (window == 0 || stride == 0 || length < window) return out;
  for (std::size_t s = 0; s + window <= length; s += stride) out.push_back(s);
  return out;
}

struct WindowRef {
  std::size_t sequence = 0;
  std::size_t start = 0;
};

struct WindowBatch {
  Tensor<float> x;  // (B,window,chirps,H,W,2)
  Tensor<float> y;  // (B,window,K,H,W)
  std::vector<WindowRef> refs;
};

/// Windows over a set of sequences with their ground-truth maps. The last
/// `stride` frames of each window are its evaluation frames. The dataset
/// refers to `sequences`, which must outlive it.
class WindowDataset {
public:
  WindowDataset(std::vector<Sequence>&&, std::size_t, std::span<const double>, std::size_t = 16,
                std::size_t = 4) = delete;
  WindowDataset(const std::vector<Sequence>& sequences, std::size_t num_classes,
                std::span<const double> sigma_per_class, std::size_t window = 16, std::size_t stride = 4)
      : sequences_(&sequences), window_(window), stride_(stride), classes_(num_classes) {
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      const auto& seq = sequences[s];
      const std::size_t T = seq.num_frames();
      const std::size_t H = seq.frames.dim(2), W = seq.frames.dim(3);
      gt_.push_back(gt_confmap(seq.annotations, T, num_classes, H, W, sigma_per_class));
      const auto starts = window_starts(T, window, stride);
      if (starts.empty())
        warnings_.push_back("sequence '" + seq.name + "' has " + std::to_string(T) +
                            " frames, fewer than the window of " + std::to_string(window) + "; skipped");
      for (std::size_t st : starts) refs_.push_back({s, st});
    }
  }

  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  const std::vector<WindowRef>& refs() const { return refs_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t window() const { return window_; }
  std::size_t stride() const { return stride_; }
  const Tensor<float>& ground_truth(std::size_t seq) const { return gt_.at(seq); }

  /// Frame indices of a window that are scored at evaluation time.
  std::vector<std::size_t> eval_frames(const WindowRef& r) const {
    std::vector<std::size_t> out;
    for (std::size_t f = r.start + window_ - stride_; f < r.start + window_; ++f) out.push_back(f);
    return out;
  }

  WindowBatch batch(std::span<const WindowRef> refs) const {
    if (refs.empty()) throw ConfigError("empty batch");
    const auto& first = (*sequences_)[refs[0].sequence].frames;
    const std::size_t K = first.dim(1), H = first.dim(2), W = first.dim(3), B = refs.size();
    WindowBatch b;
    b.x = Tensor<float>(Shape{B, window_, K, H, W, 2});
    b.y = Tensor<float>(Shape{B, window_, classes_, H, W});
    const std::size_t fx = K * H * W * 2, fy = classes_ * H * W;
    for (std::size_t i = 0; i < B; ++i) {
      const auto& r = refs[i];
      const auto& seq = (*sequences_)[r.sequence].frames;
      if (seq.dim(1) != K || seq.dim(2) != H || seq.dim(3) != W)
        throw ShapeError("batch mixes sequences with different frame shapes");
      std::copy_n(seq.data() + r.start * fx, window_ * fx, b.x.data() + i * window_ * fx);
      std::copy_n(gt_[r.sequence].data() + r.start * fy, window_ * fy, b.y.data() + i * window_ * fy);
    }
    b.refs.assign(refs.begin(), refs.end());
    return b;
  }

private:
  const std::vector<Sequence>* sequences_;
  std::size_t window_, stride_, classes_;
  std::vector<Tensor<float>> gt_;
  std::vector<WindowRef> refs_;
  std::vector<std::string> warnings_;
};

/// Sequence-level split with roughly one test sequence per ten (at least one
/// on each side). Returns sorted index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(std::size_t n,
                                                                                    std::uint64_t seed) {
  if (n < 2) throw ConfigError("split_train_test: need at least 2 sequences");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) / 10.0));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<long>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<long>(n_test), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace mradnet::data
