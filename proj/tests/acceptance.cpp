// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed below.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "mradnet/cli.hpp"
#include "mradnet/mradnet.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#ifndef MRADNET_SOURCE_DIR
#error "MRADNET_SOURCE_DIR must be defined"
#endif

using namespace mradnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kOlsTol = 1e-12;
constexpr double kSmoothL1Tol = 1e-12;
constexpr double kGradRelTol = 1e-3;
constexpr double kPermTol = 1e-5;
constexpr double kOverfitMin = 95.0;
constexpr double kParamsBand = 0.25;
constexpr double kFlopsBand = 0.30;

constexpr double kBudgetAc1 = 1.0;
constexpr double kBudgetAc2 = 30.0;
constexpr double kBudgetAc3 = 30.0;
constexpr double kBudgetAc4 = 120.0;
constexpr double kBudgetAc5 = 300.0;
constexpr double kBudgetAc6 = 60.0;
constexpr double kBudgetAc7 = 900.0;

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.ok = false;
    o.detail += " (over time budget " + std::to_string(static_cast<int>(budget_s)) + " s)";
  }
  if (!o.ok) ++failures;
  std::printf("[%s] AC%d %s: %s [%.1f s]\n", o.ok ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

json read_config(const std::string& name) {
  const fs::path p = fs::path(MRADNET_SOURCE_DIR) / "configs" / name;
  std::ifstream f(p);
  if (!f) throw DataError("missing config " + p.string());
  return json::parse(f);
}

Tensor<float> gaussian_input(const ModelConfig& c, std::size_t B, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> x(Shape{B, c.num_frames, c.num_chirps, c.height, c.width, 2});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = n(rng);
  return x;
}

std::vector<float> bump_map(std::mt19937_64& rng, std::size_t H, std::size_t W) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<float> m(H * W);
  for (auto& v : m) v = static_cast<float>(0.15 * u(rng));
  const int bumps = 1 + static_cast<int>(u(rng) * 6);
  for (int b = 0; b < bumps; ++b) {
    const double ci = u(rng) * H, cj = u(rng) * W, s = 0.8 + 3 * u(rng), a = 0.3 + 0.7 * u(rng);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
        m[i * W + j] = std::max(m[i * W + j], static_cast<float>(a * std::exp(-d2 / (2 * s * s))));
      }
  }
  return m;
}

Outcome ac1() {
  const double a = eval::ols(0.0, 5.0, 1.0);
  double worst = 0;
  for (double s : {0.5, 3.0, 17.0})
    for (double k : {0.5, 1.0, 2.0}) worst = std::max(worst, std::abs(eval::ols(s * k, s, k) - std::exp(-0.5)));
  double jump = 0;
  for (double y : {-2.0, 0.0, 3.5})
    for (double side : {1.0, -1.0}) {
      const double x = y + side;
      Tensor<double> t(Shape{1}, y);
      const double at = ops::smooth_l1_loss(constant(Tensor<double>(Shape{1}, x)), t)->value[0];
      const double quad = 0.5 * (x - y) * (x - y), lin = std::abs(x - y) - 0.5;
      jump = std::max({jump, std::abs(at - quad), std::abs(at - lin)});
    }
  const bool ok = a == 1.0 && worst <= kOlsTol && jump <= kSmoothL1Tol;
  return {ok, fmt("ols(0)=%.17g, |ols(s*k)-e^-0.5|max=%.2e, smooth_l1 branch gap=%.2e", a, worst, jump)};
}

Outcome ac2() {
  eval::EvalConfig c;
  const std::size_t H = 32, W = 32, K = 3;
  const oracle::Geometry g{c.geometry.range_min_m, c.geometry.range_max_m, c.geometry.azimuth_fov_rad, H, W};
  std::size_t mismatched = 0, kept = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<float> maps;
    std::vector<oracle::Peak> cand;
    for (std::size_t k = 0; k < K; ++k) {
      auto m = bump_map(rng, H, W);
      auto p = oracle::peaks(m, H, W, c.peak_threshold, 0, k);
      cand.insert(cand.end(), p.begin(), p.end());
      maps.insert(maps.end(), m.begin(), m.end());
    }
    const auto expect = oracle::lnms(cand, g, c.kappa, c.lnms_threshold);
    std::set<oracle::Peak> got;
    for (const auto& d : eval::detect_frame(maps, K, H, W, 0, c))
      got.insert({d.frame, d.class_id, d.range_bin, d.azimuth_bin, d.score});
    if (got != expect) ++mismatched;
    kept += got.size();
  }
  return {mismatched == 0,
          fmt("100 maps, %.0f mismatching, %.0f detections kept", static_cast<double>(mismatched), double(kept))};
}

Outcome ac3() {
  eval::EvalConfig c;
  const std::size_t H = 32, W = 32;
  std::mt19937_64 rng(314);
  std::uniform_int_distribution<std::size_t> n(1, 6), bin(0, 31), cls(0, 2);
  std::size_t wrong = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t np = n(rng), ng = n(rng), k = cls(rng);
    std::vector<eval::Detection> preds;
    std::vector<data::Annotation> gts;
    for (std::size_t i = 0; i < np; ++i) preds.push_back({0, k, bin(rng), bin(rng), 0.5});
    for (std::size_t i = 0; i < ng; ++i) gts.push_back({0, k, bin(rng), bin(rng)});
    std::vector<std::vector<double>> sim(np, std::vector<double>(ng));
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = 0; b < ng; ++b)
        sim[a][b] = eval::ols_between_bins(gts[b].range_bin, gts[b].azimuth_bin, preds[a].range_bin,
                                           preds[a].azimuth_bin, k, c, H, W);
    const auto m = eval::hungarian_match(preds, gts, c, H, W);
    std::vector<double> by_side(std::min(np, ng), 0.0);
    for (const auto& p : m.pairs) by_side[np <= ng ? p.pred : p.gt] = p.ols;
    const double total = std::accumulate(by_side.begin(), by_side.end(), 0.0);
    if (m.pairs.size() != std::min(np, ng) || total != oracle::best_assignment(sim)) ++wrong;
  }
  return {wrong == 0, fmt("500 instances, %.0f differ from the exhaustive optimum", static_cast<double>(wrong))};
}

Outcome ac4() {
  ModelConfig c;
  auto p = init_params<float>(c, 1);
  p.set_trainable(false);
  const auto y = predict(gaussian_input(c, 2, 2), p, c);
  const Shape want{2, 16, c.num_classes, 128, 128};
  const bool full_ok = y.shape() == want && y.all_finite();

  std::mt19937_64 rng(4242);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::size_t bad = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    ModelConfig r;
    const std::size_t S = pick(2, 3);
    r.num_frames = 2 * pick(1, 2);
    r.num_chirps = pick(1, 4);
    r.height = (std::size_t{1} << S) * pick(1, 3);
    r.width = (std::size_t{1} << S) * pick(1, 3);
    r.num_classes = pick(1, 3);
    r.embed_channels = pick(1, 4);
    r.attn_heads = pick(1, 2);
    r.stage_channels.clear();
    r.stage_depths.clear();
    r.stage_mixers.clear();
    for (std::size_t l = 0; l < S; ++l) {
      r.stage_channels.push_back(r.attn_heads * pick(1, 4));
      r.stage_depths.push_back(pick(1, 2));
      r.stage_mixers.push_back(pick(0, 1) ? MixerKind::Attention : MixerKind::SepConv);
    }
    r.decoder_depths.assign(S - 1, 1);
    r.decoder_mixers.clear();
    for (std::size_t l = 0; l + 1 < S; ++l)
      r.decoder_mixers.push_back(pick(0, 1) ? MixerKind::Attention : MixerKind::SepConv);
    r.merge = pick(0, 1) ? MergeKind::Conv : MergeKind::Rearrange;
    r.embed = pick(0, 1) ? EmbedKind::AvgPool : EmbedKind::ChirpConv;
    const std::size_t B = pick(1, 2);
    auto q = init_params<float>(r, trial);
    q.set_trainable(false);
    ForwardTrace tr;
    const auto out = forward(constant(gaussian_input(r, B, trial)), q, r, &tr)->value;
    auto tok = [&](std::size_t l) {
      return Shape{B, r.num_frames / 2, (r.height / 2) >> l, (r.width / 2) >> l, r.stage_channels[l]};
    };
    std::vector<std::pair<std::string, Shape>> want_tr{{"embed", tok(0)}};
    for (std::size_t l = 0; l < S; ++l) {
      want_tr.push_back({"encoder." + std::to_string(l), tok(l)});
      if (l + 1 < S) want_tr.push_back({"encoder." + std::to_string(l) + ".merge", tok(l + 1)});
    }
    for (std::size_t l = S - 1; l-- > 0;) {
      want_tr.push_back({"decoder." + std::to_string(l) + ".split", tok(l)});
      want_tr.push_back({"decoder." + std::to_string(l), tok(l)});
    }
    want_tr.push_back({"head", Shape{B, r.num_frames, r.num_classes, r.height, r.width}});
    if (!r.problems().empty() || tr.entries != want_tr || out.shape() != want_tr.back().second) ++bad;
  }
  return {full_ok && bad == 0, "default model on (2,16,4,128,128,2) -> " + shape_str(y.shape()) + ", " +
                                   std::to_string(trials) + " random configs, " + std::to_string(bad) +
                                   " with wrong stage shapes"};
}

Outcome ac5() {
  ModelConfig c;
  c.num_frames = 4;
  c.height = c.width = 8;
  c.num_classes = 2;
  c.embed_channels = 4;
  c.stage_channels = {4, 8};
  c.stage_depths = {1, 1};
  c.stage_mixers = {MixerKind::SepConv, MixerKind::Attention};
  c.decoder_depths = {1};
  c.decoder_mixers = {MixerKind::SepConv};
  c.mlp_ratio = 2.0;
  c.attn_heads = 2;
  auto p = init_params<double>(c, 31, InitOptions{0.4});
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& [k, q] : p)
    if (q.role != ParamRole::Weight)
      for (std::size_t i = 0; i < q.value().numel(); ++i) q.value()[i] += u(rng);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<double> xin(Shape{1, 4, c.num_chirps, 8, 8, 2});
  for (std::size_t i = 0; i < xin.numel(); ++i) xin[i] = nd(rng);
  auto x = constant(xin);
  Tensor<double> target(Shape{1, 4, 2, 8, 8}, 0.25);
  std::vector<Var<double>> leaves;
  for (auto& [k, q] : p) leaves.push_back(q.var);
  const auto r = testing_support::check_gradients(
      leaves, [&] { return ops::smooth_l1_loss(forward(x, p, c), target); }, 1e-5, 1e-9);
  const bool ok = r.checked == count_params(c) && r.max_rel < kGradRelTol;
  return {ok, fmt("%.0f of %.0f parameters checked, max relative error %.3e", double(r.checked),
                  double(count_params(c)), r.max_rel)};
}

Outcome ac6() {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> n(0.0f, 1.0f);
  auto random_tokens = [&](const Shape& s) {
    Tensor<float> t(s);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = n(rng);
    return t;
  };
  const auto big = random_tokens(Shape{2, 4, 16, 8, 6});
  const bool invertible = bitwise_equal(token_unarrange(token_rearrange(constant(big)))->value, big);

  ModelConfig c;
  c.num_frames = 4;
  c.height = c.width = 16;
  c.embed_channels = 4;
  c.stage_channels = {8, 16};
  c.stage_depths = {1, 1};
  c.stage_mixers = {MixerKind::SepConv, MixerKind::Attention};
  c.decoder_depths = {1};
  c.decoder_mixers = {MixerKind::SepConv};
  c.attn_heads = 2;
  auto p = init_params<float>(c, 7, InitOptions{0.3});
  const Shape s{1, 2, 4, 4, 16};
  const std::size_t N = 32, C = 16;
  const auto x = random_tokens(s);
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<float> xp(s);
  for (std::size_t i = 0; i < N; ++i) std::copy_n(x.data() + perm[i] * C, C, xp.data() + i * C);
  const auto y = attention_mixer(constant(x), p, "encoder.1.block.0.mixer", 2)->value;
  const auto yp = attention_mixer(constant(xp), p, "encoder.1.block.0.mixer", 2)->value;
  double worst = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t ch = 0; ch < C; ++ch)
      worst = std::max(worst, static_cast<double>(std::abs(yp[i * C + ch] - y[perm[i] * C + ch])));

  auto z = init_params<float>(c, 8, InitOptions{0.02, true});
  const auto t0 = random_tokens(Shape{1, 2, 8, 8, 8});
  const auto t1 = random_tokens(Shape{1, 2, 4, 4, 16});
  const bool identity =
      bitwise_equal(metaformer_block(constant(t0), z, "encoder.0.block.0", c, MixerKind::SepConv)->value, t0) &&
      bitwise_equal(metaformer_block(constant(t1), z, "encoder.1.block.0", c, MixerKind::Attention)->value, t1);
  const bool ok = invertible && worst < kPermTol && identity;
  return {ok, std::string("rearrange inverse ") + (invertible ? "bitwise" : "DIFFERS") +
                  fmt(", attention permutation error %.2e", worst) + ", zeroed-residual block " +
                  (identity ? "bitwise identity" : "NOT identity")};
}

Outcome ac7() {
  const ModelConfig m = read_config("tiny.json").get<ModelConfig>();
  const TrainConfig base = read_config("tiny_train.json").get<TrainConfig>();
  std::vector<double> aps, ars;
  std::string runs;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::vector<data::Sequence> seqs;
    for (std::uint64_t s = 0; s < 4; ++s) {
      data::RandomSceneOptions o;
      o.num_frames = 40;
      o.height = m.height;
      o.width = m.width;
      o.num_objects = 2 + s % 2;
      seqs.push_back(data::render_sequence(data::random_scene(o, seed * 100 + s), "seq" + std::to_string(s)));
    }
    TrainConfig tc = base;
    tc.seed = seed;
    data::WindowDataset ds(seqs, m.num_classes, tc.gt_sigma, tc.window, tc.stride);
    auto st = init_train_state<float>(m, tc);
    train(st, m, ds, tc);
    st.params.set_trainable(false);
    eval::EvalAccumulator acc(eval::EvalConfig{});
    for (const auto& s : seqs)
      eval::evaluate_sequence([&](const Tensor<float>& x) { return predict(x, st.params, m); }, s, m.num_classes,
                              acc);
    const auto r = acc.result();
    aps.push_back(r.ap);
    ars.push_back(r.ar);
    runs += fmt(" seed%.0f AP %.2f AR %.2f;", double(seed), r.ap, r.ar);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double ap = median(aps), ar = median(ars);
  const bool ok = ap >= kOverfitMin && ar >= kOverfitMin && base.epochs <= 30;
  return {ok, fmt("median AP %.2f AR %.2f over 3 seeds (%.0f epochs);", ap, ar, double(base.epochs)) + runs};
}

Outcome ac8() {
  const json rep = cli::info_report(ModelConfig{});
  const double dp = rep["relative_deviation"]["params"], df = rep["relative_deviation"]["gflops"];
  const bool ok = std::abs(dp) <= kParamsBand && std::abs(df) <= kFlopsBand && !rep["notes"].empty();
  return {ok, fmt("params %.3f M (%+.1f%%), ", rep["params_millions"].get<double>(), 100 * dp) +
                  fmt("%.2f GMAC (%+.1f%%) per window", rep["gflops"].get<double>(), 100 * df)};
}

Outcome ac9() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"ablation_no_attention.json", "ablation_merge_conv.json", "ablation_avg_pool_embed.json"}) {
    const ModelConfig m = read_config(name).get<ModelConfig>();
    m.validate();
    data::RandomSceneOptions o;
    o.num_frames = m.num_frames;
    o.height = m.height;
    o.width = m.width;
    // A sequence exactly one window long: one optimizer step.
    const std::vector<data::Sequence> seqs{data::render_sequence(data::random_scene(o, 9), "ablation")};
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 1;
    tc.window = m.num_frames;
    data::WindowDataset ds(seqs, m.num_classes, tc.gt_sigma, tc.window, tc.stride);
    auto st = init_train_state<float>(m, tc);
    TrainHooks h;
    std::size_t steps = 0;
    h.on_step = [&](const LogRow&) { ++steps; };
    train(st, m, ds, tc, h);
    const bool good = steps == 1 && std::isfinite(st.history.back().loss);
    ok = ok && good;
    detail += std::string(name) + (good ? " ok" : " FAILED") + fmt(" (loss %.4f); ", st.history.back().loss);
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number; default is all.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto run = [&](int id, const std::string& name, double budget, const std::function<Outcome()>& body) {
    if (only.empty() || only.count(id)) report(id, name, budget, body);
  };
  std::printf("mradnet acceptance run\n");
  run(1, "metric exactness", kBudgetAc1, ac1);
  run(2, "L-NMS oracle equivalence", kBudgetAc2, ac2);
  run(3, "Hungarian optimality", kBudgetAc3, ac3);
  run(4, "shape suite", kBudgetAc4, ac4);
  run(5, "gradient check", kBudgetAc5, ac5);
  run(6, "structural invariants", kBudgetAc6, ac6);
  run(7, "overfit sanity", kBudgetAc7, ac7);
  run(8, "budget plausibility", 0, ac8);
  run(9, "ablation wiring", 0, ac9);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
