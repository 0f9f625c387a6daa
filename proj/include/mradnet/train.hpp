// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mradnet/data.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/model.hpp"
#include "mradnet/ops.hpp"
#include "mradnet/params.hpp"

namespace mradnet {

enum class OptimizerKind { AdamP, AdamW };
NLOHMANN_JSON_SERIALIZE_ENUM(OptimizerKind, {{OptimizerKind::AdamP, "adamp"}, {OptimizerKind::AdamW, "adamw-fallback"}})

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double lr0 = 1e-4;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::AdamP;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  double adamp_delta = 0.1;
  double adamp_wd_ratio = 0.1;
  double init_std = 0.02;
  double head_bias_init = -2.0;  // logit prior of the output maps
  std::size_t window = 16;
  std::size_t stride = 4;
  std::vector<double> gt_sigma{2.0, 3.0, 4.0};

  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    if (epochs < 1) p.push_back("epochs must be at least 1");
    if (batch_size < 1) p.push_back("batch_size must be at least 1");
    if (!(lr0 > 0)) p.push_back("lr0 must be positive");
    if (weight_decay < 0) p.push_back("weight_decay must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) p.push_back("betas must lie in [0,1)");
    if (!(eps > 0)) p.push_back("eps must be positive");
    if (grad_clip < 0) p.push_back("grad_clip must be non-negative");
    if (!(init_std > 0)) p.push_back("init_std must be positive");
    if (!std::isfinite(head_bias_init)) p.push_back("head_bias_init must be finite");
    if (window == 0 || stride == 0 || stride > window) p.push_back("window/stride must satisfy 0 < stride <= window");
    for (double s : gt_sigma)
      if (!(s > 0)) p.push_back("gt_sigma entries must be positive");
    return p;
  }
  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ConfigError(std::move(p));
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr0", c.lr0},
                     {"weight_decay", c.weight_decay},
                     {"seed", c.seed},
                     {"optimizer", c.optimizer},
                     {"betas", {c.beta1, c.beta2}},
                     {"eps", c.eps},
                     {"grad_clip", c.grad_clip},
                     {"adamp_delta", c.adamp_delta},
                     {"adamp_wd_ratio", c.adamp_wd_ratio},
                     {"init_std", c.init_std},
                     {"head_bias_init", c.head_bias_init},
                     {"window", c.window},
                     {"stride", c.stride},
                     {"gt_sigma", c.gt_sigma}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  std::vector<std::string> problems;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(std::string("train config field '") + key + "': " + e.what());
    }
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("lr0", c.lr0);
  get("weight_decay", c.weight_decay);
  get("seed", c.seed);
  get("optimizer", c.optimizer);
  if (j.contains("betas")) {
    std::vector<double> b;
    get("betas", b);
    if (b.size() == 2) {
      c.beta1 = b[0];
      c.beta2 = b[1];
    } else {
      problems.push_back("train config field 'betas' must have two entries");
    }
  }
  get("eps", c.eps);
  get("grad_clip", c.grad_clip);
  get("adamp_delta", c.adamp_delta);
  get("adamp_wd_ratio", c.adamp_wd_ratio);
  get("init_std", c.init_std);
  get("head_bias_init", c.head_bias_init);
  get("window", c.window);
  get("stride", c.stride);
  get("gt_sigma", c.gt_sigma);
  static const char* known[] = {"epochs",      "batch_size",     "lr0",      "weight_decay",   "seed",
                                "optimizer",   "betas",          "eps",      "grad_clip",      "adamp_delta",
                                "adamp_wd_ratio", "init_std",    "head_bias_init", "window",   "stride",
                                "gt_sigma"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      problems.push_back("train config: unknown field '" + key + "'");
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

/// Mean Smooth L1 between two confidence-map batches.
template <class T>
double smooth_l1(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape()) throw ShapeError("smooth_l1: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  if (x.numel() == 0) throw ShapeError("smooth_l1: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    const double a = std::abs(d);
    acc += a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  return acc / static_cast<double>(x.numel());
}

/// lr0 * 0.5 * (1 + cos(pi * step / total)).
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (step > total_steps) throw ConfigError("cosine_lr: step beyond total_steps");
  if (total_steps == 0) return lr0;
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// ---------------------------------------------------------------------------
// AdamP: Adam with decoupled weight decay, plus removal of the radial
// component of the update for weights that behave scale-invariantly.

template <class T>
struct AdamMoments {
  Tensor<T> m;
  Tensor<T> v;
};

template <class T>
struct OptimizerState {
  std::size_t step = 0;
  std::map<std::string, AdamMoments<T>> moments;
};

namespace detail {

/// Element groups of a weight under a per-channel view. Column layout groups
/// elements sharing the last-axis index; row layout groups contiguous rows.
struct ChannelView {
  std::size_t groups, group_size;
  bool rows;
  std::size_t index(std::size_t g, std::size_t k) const { return rows ? g * group_size + k : k * groups + g; }
};

inline ChannelView channel_view(const Shape& s, bool channel_rows) {
  const std::size_t n = shape_numel(s);
  if (channel_rows) return {s.front(), n / s.front(), true};
  return {s.back(), n / s.back(), false};
}

/// Applies the AdamP projection in place; returns the weight-decay ratio.
template <class T>
double adamp_project(const Tensor<T>& p, const Tensor<T>& g, std::vector<double>& perturb, bool channel_rows,
                     double delta, double wd_ratio, double eps) {
  const std::size_t n = p.numel();
  const ChannelView views[] = {channel_view(p.shape(), channel_rows), ChannelView{1, n, true}};
  for (const auto& view : views) {
    double max_cos = 0.0;
    for (std::size_t c = 0; c < view.groups; ++c) {
      double dot = 0, gn = 0, pn = 0;
      for (std::size_t k = 0; k < view.group_size; ++k) {
        const std::size_t i = view.index(c, k);
        dot += static_cast<double>(g[i]) * static_cast<double>(p[i]);
        gn += static_cast<double>(g[i]) * static_cast<double>(g[i]);
        pn += static_cast<double>(p[i]) * static_cast<double>(p[i]);
      }
      const double cs = std::abs(dot) / (std::max(std::sqrt(gn), eps) * std::max(std::sqrt(pn), eps));
      max_cos = std::max(max_cos, cs);
    }
    if (max_cos < delta / std::sqrt(static_cast<double>(view.group_size))) {
      for (std::size_t c = 0; c < view.groups; ++c) {
        double pn = 0;
        for (std::size_t k = 0; k < view.group_size; ++k) {
          const double v = static_cast<double>(p[view.index(c, k)]);
          pn += v * v;
        }
        const double denom = std::sqrt(pn) + eps;
        double proj = 0;
        for (std::size_t k = 0; k < view.group_size; ++k) {
          const std::size_t i = view.index(c, k);
          proj += static_cast<double>(p[i]) / denom * perturb[i];
        }
        for (std::size_t k = 0; k < view.group_size; ++k) {
          const std::size_t i = view.index(c, k);
          perturb[i] -= static_cast<double>(p[i]) / denom * proj;
        }
      }
      return wd_ratio;
    }
  }
  return 1.0;
}

}  // namespace detail

/// One optimizer update from the gradients held in `params`. Parameters
/// without a gradient are skipped. A non-finite gradient anywhere rejects the
/// whole step and leaves both params and state untouched.
template <class T>
void optimizer_step(ParamStore<T>& params, OptimizerState<T>& state, const TrainConfig& cfg, double lr) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    const auto& g = p.var->grad;
    if (g.empty()) continue;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(g[i])) throw NumericError("non-finite gradient in parameter '" + name + "'");
      sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    }
  }
  const double clip_scale =
      (cfg.grad_clip > 0 && std::sqrt(sq) > cfg.grad_clip) ? cfg.grad_clip / std::sqrt(sq) : 1.0;

  const std::size_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    const Tensor<T>& graw = p.var->grad;
    if (graw.empty()) continue;
    Tensor<T>& w = p.var->value;
    auto& mom = state.moments[name];
    if (mom.m.shape() != w.shape()) {
      mom.m = Tensor<T>(w.shape());
      mom.v = Tensor<T>(w.shape());
    }
    Tensor<T> g = graw;
    if (clip_scale != 1.0)
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] = static_cast<T>(g[i] * clip_scale);
    std::vector<double> perturb(w.numel());
    for (std::size_t i = 0; i < w.numel(); ++i) {
      mom.m[i] = static_cast<T>(cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i]);
      mom.v[i] = static_cast<T>(cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * static_cast<double>(g[i]) * g[i]);
      const double denom = std::sqrt(static_cast<double>(mom.v[i])) / std::sqrt(bc2) + cfg.eps;
      perturb[i] = static_cast<double>(mom.m[i]) / denom;
    }
    double wd_ratio = 1.0;
    if (cfg.optimizer == OptimizerKind::AdamP && p.role == ParamRole::Weight && w.rank() > 1)
      wd_ratio = detail::adamp_project(w, g, perturb, p.channel_rows, cfg.adamp_delta, cfg.adamp_wd_ratio, cfg.eps);
    const double decay = 1.0 - lr * cfg.weight_decay * wd_ratio;
    const double step_size = lr / bc1;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double updated = (cfg.weight_decay > 0 ? static_cast<double>(w[i]) * decay : static_cast<double>(w[i])) -
                             step_size * perturb[i];
      w[i] = static_cast<T>(updated);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop.

struct LogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

template <class T>
struct TrainState {
  std::size_t step = 0;
  std::size_t epoch = 0;  // completed epochs
  ParamStore<T> params;
  OptimizerState<T> optimizer;
  std::string rng_state;
  std::vector<LogRow> history;
};

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("corrupt RNG state");
  return rng;
}

template <class T>
TrainState<T> init_train_state(const ModelConfig& model, const TrainConfig& cfg) {
  model.validate();
  cfg.validate();
  TrainState<T> st;
  st.params = init_params<T>(model, cfg.seed, InitOptions{cfg.init_std, false, cfg.head_bias_init});
  st.rng_state = rng_to_string(std::mt19937_64(cfg.seed ^ 0x9e3779b97f4a7c15ULL));
  return st;
}

inline std::size_t steps_per_epoch(std::size_t windows, std::size_t batch) { return (windows + batch - 1) / batch; }

struct TrainHooks {
  std::function<void(const LogRow&)> on_step;
  std::function<void(std::size_t epoch)> on_epoch_end;
  std::size_t stop_after_epoch = 0;  // 0 runs to cfg.epochs; the schedule always spans cfg.epochs
};

/// Runs (or resumes) training until cfg.epochs epochs are complete. Each epoch
/// visits every window once in a seeded shuffled order; the loss covers all
/// window frames.
template <class T>
void train(TrainState<T>& state, const ModelConfig& model, const data::WindowDataset& dataset, const TrainConfig& cfg,
           const TrainHooks& hooks = {}) {
  model.validate();
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training dataset has no windows");
  const std::size_t per_epoch = steps_per_epoch(dataset.size(), cfg.batch_size);
  const std::size_t total = per_epoch * cfg.epochs;
  state.params.set_trainable(true);
  const std::size_t last = hooks.stop_after_epoch ? std::min(cfg.epochs, hooks.stop_after_epoch) : cfg.epochs;
  for (std::size_t epoch = state.epoch; epoch < last; ++epoch) {
    std::mt19937_64 rng = rng_from_string(state.rng_state);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<data::WindowRef> refs;
      for (std::size_t i = b * cfg.batch_size; i < std::min(order.size(), (b + 1) * cfg.batch_size); ++i)
        refs.push_back(dataset.refs()[order[i]]);
      auto batch = dataset.batch(refs);
      const double lr = cosine_lr(state.step, total, cfg.lr0);
      state.params.zero_grad();
      Tensor<T> y = batch.y.template cast<T>();
      auto pred = forward(constant(batch.x.template cast<T>()), state.params, model);
      auto loss = ops::smooth_l1_loss(pred, y);
      const double lv = static_cast<double>(loss->value[0]);
      if (!std::isfinite(lv))
        throw NumericError("non-finite loss at step " + std::to_string(state.step));
      backward(loss);
      optimizer_step(state.params, state.optimizer, cfg, lr);
      LogRow row{state.step, epoch, lr, lv};
      state.history.push_back(row);
      ++state.step;
      if (hooks.on_step) hooks.on_step(row);
    }
    state.rng_state = rng_to_string(rng);
    state.epoch = epoch + 1;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state.epoch);
  }
  state.params.zero_grad();
}

}  // namespace mradnet
