// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <cstdio>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mradnet/data.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/tensor.hpp"

namespace mradnet::eval {

inline std::vector<double> default_ols_thresholds() {
  std::vector<double> t;
  for (int k = 50; k <= 90; k += 5) t.push_back(k / 100.0);
  return t;
}

struct EvalConfig {
  std::vector<double> kappa{0.5, 1.0, 2.0};  // per class error tolerance
  double peak_threshold = 0.1;
  double lnms_threshold = 0.3;
  std::vector<double> ols_thresholds = default_ols_thresholds();
  data::RadarGeometry geometry;

  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    if (kappa.empty()) p.push_back("kappa must list one tolerance per class");
    for (double k : kappa)
      if (!(k > 0)) p.push_back("kappa entries must be positive");
    if (!(peak_threshold > 0 && peak_threshold < 1)) p.push_back("peak_threshold must lie in (0,1)");
    if (!(lnms_threshold > 0 && lnms_threshold < 1)) p.push_back("lnms_threshold must lie in (0,1)");
    if (ols_thresholds.empty()) p.push_back("ols_thresholds must not be empty");
    for (double t : ols_thresholds)
      if (!(t > 0 && t < 1)) p.push_back("ols_thresholds entries must lie in (0,1)");
    if (!(geometry.range_min_m > 0)) p.push_back("range_min_m must be positive");
    if (!(geometry.range_max_m > geometry.range_min_m)) p.push_back("range_max_m must exceed range_min_m");
    if (!(geometry.azimuth_fov_rad > 0)) p.push_back("azimuth_fov_rad must be positive");
    return p;
  }
  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ConfigError(std::move(p));
  }
};

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = nlohmann::json{{"kappa", c.kappa},
                     {"peak_threshold", c.peak_threshold},
                     {"lnms_threshold", c.lnms_threshold},
                     {"ols_thresholds", c.ols_thresholds},
                     {"range_min_m", c.geometry.range_min_m},
                     {"range_max_m", c.geometry.range_max_m},
                     {"azimuth_fov_rad", c.geometry.azimuth_fov_rad}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& c) {
  if (!j.is_object()) throw ConfigError("eval config must be a JSON object");
  std::vector<std::string> problems;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(std::string("eval config field '") + key + "': " + e.what());
    }
  };
  get("kappa", c.kappa);
  get("peak_threshold", c.peak_threshold);
  get("lnms_threshold", c.lnms_threshold);
  get("ols_thresholds", c.ols_thresholds);
  get("range_min_m", c.geometry.range_min_m);
  get("range_max_m", c.geometry.range_max_m);
  get("azimuth_fov_rad", c.geometry.azimuth_fov_rad);
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"kappa", "peak_threshold", "lnms_threshold", "ols_thresholds",
                                  "range_min_m", "range_max_m", "azimuth_fov_rad"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      problems.push_back("eval config: unknown field '" + key + "'");
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

/// Object location similarity exp(-d^2 / (2 (s kappa)^2)).
inline double ols(double d, double s, double kappa) {
  if (!(s > 0) || !(kappa > 0) || !(d >= 0)) throw DomainError("ols: need d >= 0, s > 0, kappa > 0");
  const double sk = s * kappa;
  return std::exp(-(d * d) / (2.0 * sk * sk));
}

struct Detection {
  std::size_t frame = 0;
  std::size_t class_id = 0;
  std::size_t range_bin = 0;
  std::size_t azimuth_bin = 0;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// OLS between two bin locations of one class. The reference sets s (its
/// range); azimuth offsets become arc length at that range.
inline double ols_between_bins(std::size_t ref_r, std::size_t ref_a, std::size_t r, std::size_t a,
                               std::size_t class_id, const EvalConfig& cfg, std::size_t H, std::size_t W) {
  if (class_id >= cfg.kappa.size()) throw ConfigError("no kappa configured for class " + std::to_string(class_id));
  const auto& g = cfg.geometry;
  const double s = g.range_of_bin(static_cast<double>(ref_r), H);
  const double dr = s - g.range_of_bin(static_cast<double>(r), H);
  const double da = g.azimuth_of_bin(static_cast<double>(ref_a), W) - g.azimuth_of_bin(static_cast<double>(a), W);
  const double arc = s * da;
  return ols(std::sqrt(dr * dr + arc * arc), s, cfg.kappa[class_id]);
}

/// Interior cells strictly greater than all 8 neighbours and at least
/// `threshold`. Border cells are never peaks.
inline std::vector<Detection> peak_detect(std::span<const float> map, std::size_t H, std::size_t W, double threshold,
                                          std::size_t frame = 0, std::size_t class_id = 0) {
  if (map.size() != H * W) throw ShapeError("peak_detect: map size does not match H*W");
  std::vector<Detection> out;
  for (std::size_t i = 1; i + 1 < H; ++i)
    for (std::size_t j = 1; j + 1 < W; ++j) {
      const float v = map[i * W + j];
      if (!(static_cast<double>(v) >= threshold)) continue;
      bool peak = true;
      for (int di = -1; di <= 1 && peak; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (!di && !dj) continue;
          if (!(v > map[(i + di) * W + (j + dj)])) {
            peak = false;
            break;
          }
        }
      if (peak) out.push_back({frame, class_id, i, j, static_cast<double>(v)});
    }
  return out;
}

/// Strict total order used for greedy selection: higher score first, then
/// lower range bin, then lower azimuth bin.
inline bool more_confident(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.range_bin != b.range_bin) return a.range_bin < b.range_bin;
  return a.azimuth_bin < b.azimuth_bin;
}

/// Location-based NMS, run independently per (frame, class): repeatedly keep
/// the most confident candidate and drop every remaining one whose OLS with
/// it exceeds lnms_threshold.
inline std::vector<Detection> l_nms(std::vector<Detection> peaks, const EvalConfig& cfg, std::size_t H, std::size_t W) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<Detection>> groups;
  for (const auto& p : peaks) groups[{p.frame, p.class_id}].push_back(p);
  std::vector<Detection> out;
  for (auto& [key, cand] : groups) {
    std::sort(cand.begin(), cand.end(), more_confident);
    std::vector<bool> removed(cand.size(), false);
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (removed[i]) continue;
      const auto& p = cand[i];
      out.push_back(p);
      for (std::size_t j = i + 1; j < cand.size(); ++j) {
        if (removed[j]) continue;
        const auto& q = cand[j];
        if (ols_between_bins(p.range_bin, p.azimuth_bin, q.range_bin, q.azimuth_bin, p.class_id, cfg, H, W) >
            cfg.lnms_threshold)
          removed[j] = true;
      }
    }
  }
  return out;
}

/// Peak detection + L-NMS over one frame's maps (K,H,W).
inline std::vector<Detection> detect_frame(std::span<const float> maps, std::size_t K, std::size_t H, std::size_t W,
                                           std::size_t frame, const EvalConfig& cfg) {
  if (maps.size() != K * H * W) throw ShapeError("detect_frame: map size does not match K*H*W");
  std::vector<Detection> peaks;
  for (std::size_t c = 0; c < K; ++c) {
    auto p = peak_detect(maps.subspan(c * H * W, H * W), H, W, cfg.peak_threshold, frame, c);
    peaks.insert(peaks.end(), p.begin(), p.end());
  }
  return l_nms(std::move(peaks), cfg, H, W);
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column of each row. O(rows^2 * cols).
inline std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  if (m < n) throw ConfigError("solve_assignment: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> col_of(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j]) col_of[p[j] - 1] = j - 1;
  return col_of;
}

struct MatchPair {
  std::size_t pred = 0;  // index into the predictions
  std::size_t gt = 0;    // index into the ground truths
  double ols = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // sorted by prediction index
  std::vector<std::size_t> unmatched_preds;
  std::vector<std::size_t> unmatched_gts;

  /// Sum of pair OLS in prediction-index order.
  double total_ols() const {
    double s = 0.0;
    for (const auto& p : pairs) s += p.ols;
    return s;
  }
};

/// One-to-one matching maximising total OLS. Only predictions and ground
/// truths with the same frame and class can pair; OLS uses the ground truth as
/// the reference object.
inline MatchResult hungarian_match(std::span<const Detection> preds, std::span<const data::Annotation> gts,
                                   const EvalConfig& cfg, std::size_t H, std::size_t W) {
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> pools;
  for (std::size_t i = 0; i < preds.size(); ++i) pools[{preds[i].frame, preds[i].class_id}].first.push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i) pools[{gts[i].frame_index, gts[i].class_id}].second.push_back(i);

  MatchResult res;
  std::vector<bool> pred_used(preds.size(), false), gt_used(gts.size(), false);
  for (const auto& [key, pool] : pools) {
    const auto& [pi, gi] = pool;
    if (pi.empty() || gi.empty()) continue;
    std::vector<std::vector<double>> sim(pi.size(), std::vector<double>(gi.size()));
    for (std::size_t a = 0; a < pi.size(); ++a)
      for (std::size_t b = 0; b < gi.size(); ++b) {
        const auto& p = preds[pi[a]];
        const auto& g = gts[gi[b]];
        sim[a][b] = ols_between_bins(g.range_bin, g.azimuth_bin, p.range_bin, p.azimuth_bin, g.class_id, cfg, H, W);
      }
    const bool rows_are_preds = pi.size() <= gi.size();
    const std::size_t R = rows_are_preds ? pi.size() : gi.size(), C = rows_are_preds ? gi.size() : pi.size();
    std::vector<std::vector<double>> cost(R, std::vector<double>(C));
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) cost[r][c] = -(rows_are_preds ? sim[r][c] : sim[c][r]);
    const auto col = solve_assignment(cost);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t a = rows_are_preds ? r : col[r];
      const std::size_t b = rows_are_preds ? col[r] : r;
      res.pairs.push_back({pi[a], gi[b], sim[a][b]});
      pred_used[pi[a]] = true;
      gt_used[gi[b]] = true;
    }
  }
  std::sort(res.pairs.begin(), res.pairs.end(), [](const MatchPair& x, const MatchPair& y) { return x.pred < y.pred; });
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (!pred_used[i]) res.unmatched_preds.push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i)
    if (!gt_used[i]) res.unmatched_gts.push_back(i);
  return res;
}

struct ThresholdStat {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ApAr {
  double ap = 0.0;  // percent
  double ar = 0.0;  // percent
  std::size_t num_detections = 0;
  std::size_t num_ground_truths = 0;
  std::vector<ThresholdStat> per_threshold;
};

/// A matched pair is a true positive at threshold t iff its OLS >= t. AP and
/// AR are the means of precision and recall over the thresholds, in percent.
/// Precision with no detections is 0.
inline ApAr ap_ar(std::span<const double> matched_ols, std::size_t num_detections, std::size_t num_ground_truths,
                  std::span<const double> thresholds) {
  if (num_ground_truths == 0) throw DomainError("ap_ar: recall is undefined without ground truths");
  if (thresholds.empty()) throw ConfigError("ap_ar: no OLS thresholds");
  if (matched_ols.size() > std::min(num_detections, num_ground_truths))
    throw ConfigError("ap_ar: more matches than detections or ground truths");
  ApAr out;
  out.num_detections = num_detections;
  out.num_ground_truths = num_ground_truths;
  double psum = 0.0, rsum = 0.0;
  for (double t : thresholds) {
    ThresholdStat s;
    s.threshold = t;
    s.tp = static_cast<std::size_t>(std::count_if(matched_ols.begin(), matched_ols.end(), [t](double o) { return o >= t; }));
    s.fp = num_detections - s.tp;
    s.fn = num_ground_truths - s.tp;
    s.precision = num_detections ? static_cast<double>(s.tp) / static_cast<double>(num_detections) : 0.0;
    s.recall = static_cast<double>(s.tp) / static_cast<double>(num_ground_truths);
    psum += s.precision;
    rsum += s.recall;
    out.per_threshold.push_back(s);
  }
  out.ap = 100.0 * psum / static_cast<double>(thresholds.size());
  out.ar = 100.0 * rsum / static_cast<double>(thresholds.size());
  return out;
}

/// Collects per-frame detections and matches across sequences.
class EvalAccumulator {
public:
  explicit EvalAccumulator(EvalConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  /// Scores one frame: maps is (K,H,W); gts are that frame's annotations.
  const std::vector<Detection>& add_frame(std::span<const float> maps, std::size_t K, std::size_t H, std::size_t W,
                                          std::size_t frame, std::span<const data::Annotation> gts) {
    if (K > cfg_.kappa.size()) throw ConfigError("eval config lists fewer kappa values than classes");
    last_ = detect_frame(maps, K, H, W, frame, cfg_);
    const auto m = hungarian_match(last_, gts, cfg_, H, W);
    for (const auto& p : m.pairs) matched_.push_back(p.ols);
    detections_ += last_.size();
    ground_truths_ += gts.size();
    return last_;
  }

  ApAr result() const { return ap_ar(matched_, detections_, ground_truths_, cfg_.ols_thresholds); }
  std::size_t num_ground_truths() const { return ground_truths_; }
  const EvalConfig& config() const { return cfg_; }

private:
  EvalConfig cfg_;
  std::vector<Detection> last_;
  std::vector<double> matched_;
  std::size_t detections_ = 0, ground_truths_ = 0;
};

struct SequenceEval {
  std::vector<Detection> detections;  // every scored frame, in frame order
  std::vector<std::size_t> frames;    // scored frame indices
  Tensor<float> confmaps;             // (T,K,H,W), zero on frames no window scores
};

/// Produces (1,window,K,H,W) confidence maps for a (1,window,chirps,H,W,2) input.
using WindowPredictor = std::function<Tensor<float>(const Tensor<float>&)>;

/// Slides 16-frame windows by 4 over a sequence and keeps each window's last
/// 4 frames of confidence maps.
inline Tensor<float> sequence_confmaps(const WindowPredictor& predict, const data::Sequence& seq,
                                       std::size_t num_classes, std::vector<std::size_t>* scored_frames,
                                       std::size_t window = 16, std::size_t stride = 4) {
  const std::size_t T = seq.num_frames(), Ch = seq.frames.dim(1), H = seq.frames.dim(2), W = seq.frames.dim(3);
  Tensor<float> maps(Shape{T, num_classes, H, W});
  const std::size_t fx = Ch * H * W * 2, fy = num_classes * H * W;
  for (std::size_t start : data::window_starts(T, window, stride)) {
    Tensor<float> x(Shape{1, window, Ch, H, W, 2});
    std::copy_n(seq.frames.data() + start * fx, window * fx, x.data());
    const Tensor<float> y = predict(x);
    if (y.shape() != Shape{1, window, num_classes, H, W})
      throw ShapeError("predictor returned " + shape_str(y.shape()));
    for (std::size_t f = window - stride; f < window; ++f) {
      std::copy_n(y.data() + f * fy, fy, maps.data() + (start + f) * fy);
      if (scored_frames) scored_frames->push_back(start + f);
    }
  }
  return maps;
}

/// Scores the given frames of precomputed maps (T,K,H,W) against annotations.
inline SequenceEval score_confmaps(Tensor<float> maps, std::span<const std::size_t> frames,
                                   std::span<const data::Annotation> annotations, EvalAccumulator& acc) {
  const std::size_t K = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  SequenceEval out;
  for (std::size_t f : frames) {
    std::vector<data::Annotation> gts;
    for (const auto& a : annotations)
      if (a.frame_index == f) gts.push_back(a);
    const auto& dets = acc.add_frame(std::span<const float>(maps.data() + f * K * H * W, K * H * W), K, H, W, f, gts);
    out.detections.insert(out.detections.end(), dets.begin(), dets.end());
    out.frames.push_back(f);
  }
  out.confmaps = std::move(maps);
  return out;
}

/// Full sliding-window evaluation of one sequence.
inline SequenceEval evaluate_sequence(const WindowPredictor& predict, const data::Sequence& seq, std::size_t num_classes,
                                      EvalAccumulator& acc) {
  std::vector<std::size_t> frames;
  auto maps = sequence_confmaps(predict, seq, num_classes, &frames);
  return score_confmaps(std::move(maps), frames, seq.annotations, acc);
}

inline nlohmann::json report_json(const ApAr& r, const EvalConfig& cfg) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : r.per_threshold)
    per.push_back({{"threshold", s.threshold},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"tp", s.tp},
                   {"fp", s.fp},
                   {"fn", s.fn}});
  return {{"config", cfg},
          {"AP", r.ap},
          {"AR", r.ar},
          {"num_detections", r.num_detections},
          {"num_ground_truths", r.num_ground_truths},
          {"per_threshold", per}};
}

inline void write_detections_csv(std::ostream& os, std::span<const Detection> dets) {
  os << "frame,class,range_bin,azimuth_bin,score\n";
  char buf[64];
  for (const auto& d : dets) {
    std::snprintf(buf, sizeof buf, "%.6f", d.score);
    os << d.frame << ',' << d.class_id << ',' << d.range_bin << ',' << d.azimuth_bin << ',' << buf << '\n';
  }
}

inline std::vector<Detection> read_detections_csv(std::istream& is) {
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("frame", 0) == 0) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Detection d;
    char c1, c2, c3, c4;
    std::istringstream ls(line);
    if (!(ls >> d.frame >> c1 >> d.class_id >> c2 >> d.range_bin >> c3 >> d.azimuth_bin >> c4 >> d.score) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',')
      throw DataError("detections csv line " + std::to_string(lineno) + ": malformed");
    out.push_back(d);
  }
  return out;
}

}  // namespace mradnet::eval
