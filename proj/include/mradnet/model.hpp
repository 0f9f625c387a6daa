// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/ops.hpp"
#include "mradnet/params.hpp"
#include "mradnet/tensor.hpp"

namespace mradnet {

enum class MixerKind { SepConv, Attention };
enum class EmbedKind { ChirpConv, AvgPool };
enum class MergeKind { Rearrange, Conv };

NLOHMANN_JSON_SERIALIZE_ENUM(MixerKind, {{MixerKind::SepConv, "sepconv"}, {MixerKind::Attention, "attention"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EmbedKind, {{EmbedKind::ChirpConv, "chirp_conv"}, {EmbedKind::AvgPool, "avg_pool"}})
NLOHMANN_JSON_SERIALIZE_ENUM(MergeKind, {{MergeKind::Rearrange, "rearrange"}, {MergeKind::Conv, "conv"}})

/// Architecture hyperparameters. Decoder arrays are indexed by level like the
/// encoder ones: decoder level l (0 <= l < S-1) runs at stage_channels[l].
struct ModelConfig {
  std::size_t num_frames = 16;
  std::size_t num_chirps = 4;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t num_classes = 3;
  std::size_t embed_channels = 16;
  std::vector<std::size_t> stage_channels{64, 128, 256};
  std::vector<std::size_t> stage_depths{2, 2, 4};
  std::vector<MixerKind> stage_mixers{MixerKind::SepConv, MixerKind::SepConv, MixerKind::Attention};
  std::vector<std::size_t> decoder_depths{2, 2};
  std::vector<MixerKind> decoder_mixers{MixerKind::SepConv, MixerKind::SepConv};
  double mlp_ratio = 4.0;
  std::size_t sepconv_expansion = 2;
  std::size_t attn_heads = 8;
  std::array<std::size_t, 3> dw_kernel{3, 3, 3};
  EmbedKind embed = EmbedKind::ChirpConv;
  MergeKind merge = MergeKind::Rearrange;
  double norm_eps = 1e-6;

  std::size_t num_stages() const { return stage_channels.size(); }
  std::size_t mlp_hidden(std::size_t c) const {
    return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(c)));
  }

  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    const std::size_t S = stage_channels.size();
    if (S < 2) p.push_back("stage_channels must list at least 2 stages");
    if (stage_depths.size() != S) p.push_back("stage_depths length must equal stage_channels length");
    if (stage_mixers.size() != S) p.push_back("stage_mixers length must equal stage_channels length");
    if (S >= 1 && decoder_depths.size() != S - 1) p.push_back("decoder_depths length must be stage count - 1");
    if (S >= 1 && decoder_mixers.size() != S - 1) p.push_back("decoder_mixers length must be stage count - 1");
    if (num_frames == 0 || num_frames % 2 != 0) p.push_back("num_frames must be a positive even number");
    if (num_chirps == 0) p.push_back("num_chirps must be positive");
    if (num_classes == 0) p.push_back("num_classes must be positive");
    if (embed_channels == 0) p.push_back("embed_channels must be positive");
    const std::size_t div = S < 63 ? (std::size_t{1} << S) : 0;
    if (div == 0 || height == 0 || height % div != 0)
      p.push_back("height must be divisible by 2^stages = " + std::to_string(div));
    if (div == 0 || width == 0 || width % div != 0)
      p.push_back("width must be divisible by 2^stages = " + std::to_string(div));
    for (std::size_t c : stage_channels)
      if (c == 0) p.push_back("stage_channels entries must be positive");
    for (std::size_t d : stage_depths)
      if (d == 0) p.push_back("stage_depths entries must be positive");
    auto check_heads = [&](const std::vector<MixerKind>& mixers, const char* what) {
      for (std::size_t l = 0; l < mixers.size() && l < S; ++l)
        if (mixers[l] == MixerKind::Attention && (attn_heads == 0 || stage_channels[l] % attn_heads != 0))
          p.push_back(std::string(what) + " level " + std::to_string(l) + ": channels " +
                      std::to_string(stage_channels[l]) + " not divisible by attn_heads " +
                      std::to_string(attn_heads));
    };
    check_heads(stage_mixers, "encoder");
    check_heads(decoder_mixers, "decoder");
    if (!(mlp_ratio > 0.0)) p.push_back("mlp_ratio must be positive");
    if (sepconv_expansion == 0) p.push_back("sepconv_expansion must be positive");
    for (std::size_t k : dw_kernel)
      if (k % 2 == 0) p.push_back("dw_kernel extents must be odd");
    if (!(norm_eps > 0.0)) p.push_back("norm_eps must be positive");
    return p;
  }

  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ConfigError(std::move(p));
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"num_frames", c.num_frames},
                     {"num_chirps", c.num_chirps},
                     {"height", c.height},
                     {"width", c.width},
                     {"num_classes", c.num_classes},
                     {"embed_channels", c.embed_channels},
                     {"stage_channels", c.stage_channels},
                     {"stage_depths", c.stage_depths},
                     {"stage_mixers", c.stage_mixers},
                     {"decoder_depths", c.decoder_depths},
                     {"decoder_mixers", c.decoder_mixers},
                     {"mlp_ratio", c.mlp_ratio},
                     {"sepconv_expansion", c.sepconv_expansion},
                     {"attn_heads", c.attn_heads},
                     {"dw_kernel", c.dw_kernel},
                     {"embed", c.embed},
                     {"merge", c.merge},
                     {"norm_eps", c.norm_eps}};
}

/// Missing keys keep their defaults; unknown keys and type errors are
/// reported together.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  std::vector<std::string> problems;
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(std::string("model config field '") + key + "': " + e.what());
    }
  };
  get("num_frames", c.num_frames);
  get("num_chirps", c.num_chirps);
  get("height", c.height);
  get("width", c.width);
  get("num_classes", c.num_classes);
  get("embed_channels", c.embed_channels);
  get("stage_channels", c.stage_channels);
  get("stage_depths", c.stage_depths);
  get("stage_mixers", c.stage_mixers);
  get("decoder_depths", c.decoder_depths);
  get("decoder_mixers", c.decoder_mixers);
  get("mlp_ratio", c.mlp_ratio);
  get("sepconv_expansion", c.sepconv_expansion);
  get("attn_heads", c.attn_heads);
  get("dw_kernel", c.dw_kernel);
  get("embed", c.embed);
  get("merge", c.merge);
  get("norm_eps", c.norm_eps);
  static const char* known[] = {"num_frames", "num_chirps", "height", "width", "num_classes",
                                "embed_channels", "stage_channels", "stage_depths", "stage_mixers",
                                "decoder_depths", "decoder_mixers", "mlp_ratio", "sepconv_expansion",
                                "attn_heads", "dw_kernel", "embed", "merge", "norm_eps"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      problems.push_back("model config: unknown field '" + key + "'");
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

/// One learnable array of the network.
struct ParamSpec {
  std::string path;
  Shape shape;
  ParamRole role;
  bool channel_rows = false;
  bool residual_out = false;  // last projection of a residual branch
};

namespace detail {

inline void block_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t c, MixerKind kind,
                        const ModelConfig& cfg) {
  out.push_back({p + ".norm1.scale", {c}, ParamRole::Scale});
  if (kind == MixerKind::SepConv) {
    const std::size_t e = cfg.sepconv_expansion * c;
    const auto& k = cfg.dw_kernel;
    out.push_back({p + ".mixer.pw1.weight", {c, e}, ParamRole::Weight});
    out.push_back({p + ".mixer.pw1.bias", {e}, ParamRole::Bias});
    out.push_back({p + ".mixer.dw.weight", {k[0], k[1], k[2], e}, ParamRole::Weight});
    out.push_back({p + ".mixer.dw.bias", {e}, ParamRole::Bias});
    out.push_back({p + ".mixer.pw2.weight", {e, c}, ParamRole::Weight, false, true});
    out.push_back({p + ".mixer.pw2.bias", {c}, ParamRole::Bias});
  } else {
    out.push_back({p + ".mixer.qkv.weight", {c, 3 * c}, ParamRole::Weight});
    out.push_back({p + ".mixer.qkv.bias", {3 * c}, ParamRole::Bias});
    out.push_back({p + ".mixer.proj.weight", {c, c}, ParamRole::Weight, false, true});
    out.push_back({p + ".mixer.proj.bias", {c}, ParamRole::Bias});
  }
  const std::size_t h = cfg.mlp_hidden(c);
  out.push_back({p + ".norm2.scale", {c}, ParamRole::Scale});
  out.push_back({p + ".mlp.fc1.weight", {c, h}, ParamRole::Weight});
  out.push_back({p + ".mlp.fc1.bias", {h}, ParamRole::Bias});
  out.push_back({p + ".mlp.fc2.weight", {h, c}, ParamRole::Weight, false, true});
  out.push_back({p + ".mlp.fc2.bias", {c}, ParamRole::Bias});
}

}  // namespace detail

/// Every parameter the configuration needs, in construction order.
inline std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  const auto& ch = cfg.stage_channels;
  const std::size_t S = cfg.num_stages(), C0 = cfg.embed_channels;
  if (cfg.embed == EmbedKind::ChirpConv) {
    out.push_back({"embed.chirp.weight", {cfg.num_chirps * 2, C0}, ParamRole::Weight});
    out.push_back({"embed.chirp.bias", {C0}, ParamRole::Bias});
    out.push_back({"embed.patch.weight", {8 * C0, ch[0]}, ParamRole::Weight});
    out.push_back({"embed.patch.bias", {ch[0]}, ParamRole::Bias});
  } else {
    out.push_back({"embed.chirp.weight", {2, C0}, ParamRole::Weight});
    out.push_back({"embed.chirp.bias", {C0}, ParamRole::Bias});
    out.push_back({"embed.patch.weight", {C0, ch[0]}, ParamRole::Weight});
    out.push_back({"embed.patch.bias", {ch[0]}, ParamRole::Bias});
  }
  for (std::size_t l = 0; l < S; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    for (std::size_t k = 0; k < cfg.stage_depths[l]; ++k)
      detail::block_specs(out, p + ".block." + std::to_string(k), ch[l], cfg.stage_mixers[l], cfg);
    if (l + 1 < S) {
      if (cfg.merge == MergeKind::Rearrange) {
        out.push_back({p + ".merge.norm.scale", {4 * ch[l]}, ParamRole::Scale});
        out.push_back({p + ".merge.proj.weight", {4 * ch[l], ch[l + 1]}, ParamRole::Weight});
        out.push_back({p + ".merge.proj.bias", {ch[l + 1]}, ParamRole::Bias});
      } else {
        out.push_back({p + ".merge.conv.weight", {9 * ch[l], ch[l + 1]}, ParamRole::Weight});
        out.push_back({p + ".merge.conv.bias", {ch[l + 1]}, ParamRole::Bias});
      }
    }
  }
  for (std::size_t l = S - 1; l-- > 0;) {
    const std::string p = "decoder." + std::to_string(l);
    out.push_back({p + ".split.weight", {ch[l + 1], 4 * ch[l]}, ParamRole::Weight, true});
    out.push_back({p + ".split.bias", {ch[l]}, ParamRole::Bias});
    out.push_back({p + ".fuse.weight", {2 * ch[l], ch[l]}, ParamRole::Weight});
    out.push_back({p + ".fuse.bias", {ch[l]}, ParamRole::Bias});
    for (std::size_t k = 0; k < cfg.decoder_depths[l]; ++k)
      detail::block_specs(out, p + ".block." + std::to_string(k), ch[l], cfg.decoder_mixers[l], cfg);
  }
  out.push_back({"head.norm.scale", {ch[0]}, ParamRole::Scale});
  out.push_back({"head.weight", {ch[0], cfg.num_classes}, ParamRole::Weight});
  out.push_back({"head.bias", {cfg.num_classes}, ParamRole::Bias});
  return out;
}

struct InitOptions {
  double weight_std = 0.02;
  bool zero_residual_out = false;
  double head_bias = 0.0;  // initial logit of every class map
};

/// Truncated-normal weights, zero biases, unit norm scales. Deterministic in `seed`.
template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed, const InitOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  ParamStore<T> store;
  for (const auto& s : param_specs(cfg)) {
    Tensor<T> v(s.shape);
    if (s.role == ParamRole::Scale)
      v.fill(T{1});
    else if (s.role == ParamRole::Weight && !(opt.zero_residual_out && s.residual_out))
      v = truncated_normal<T>(s.shape, opt.weight_std, rng);
    else if (s.path == "head.bias")
      v.fill(static_cast<T>(opt.head_bias));
    store.add(s.path, std::move(v), s.role, s.channel_rows);
  }
  return store;
}

/// Parameter total of a store.
template <class T>
std::size_t count_params(const ParamStore<T>& params) {
  return params.count();
}

/// Parameter total implied by a configuration (no allocation).
inline std::size_t count_params(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : param_specs(cfg)) n += shape_numel(s.shape);
  return n;
}

/// Multiply-accumulate count of one forward pass over a single window
/// (batch 1). Normalisation, activations, softmax and interpolation are
/// not counted.
inline std::uint64_t count_flops(const ModelConfig& cfg) {
  cfg.validate();
  using u64 = std::uint64_t;
  const auto& ch = cfg.stage_channels;
  const std::size_t S = cfg.num_stages();
  const u64 pixels = u64{cfg.num_frames} * cfg.height * cfg.width;
  std::vector<u64> tokens(S);
  for (std::size_t l = 0; l < S; ++l)
    tokens[l] = u64{cfg.num_frames / 2} * ((cfg.height / 2) >> l) * ((cfg.width / 2) >> l);
  const u64 C0 = cfg.embed_channels;
  u64 f = 0;
  if (cfg.embed == EmbedKind::ChirpConv) {
    f += pixels * cfg.num_chirps * 2 * C0;
    f += tokens[0] * 8 * C0 * ch[0];
  } else {
    f += pixels * 2 * C0;
    f += tokens[0] * C0 * ch[0];
  }
  const u64 taps = u64{cfg.dw_kernel[0]} * cfg.dw_kernel[1] * cfg.dw_kernel[2];
  auto block = [&](u64 c, MixerKind kind, u64 n) {
    u64 m = 0;
    if (kind == MixerKind::SepConv) {
      const u64 e = cfg.sepconv_expansion * c;
      m += n * (c * e + taps * e + e * c);
    } else {
      m += n * 4 * c * c + 2 * n * n * c;
    }
    m += n * 2 * c * cfg.mlp_hidden(c);
    return m;
  };
  for (std::size_t l = 0; l < S; ++l) {
    for (std::size_t k = 0; k < cfg.stage_depths[l]; ++k) f += block(ch[l], cfg.stage_mixers[l], tokens[l]);
    if (l + 1 < S) f += tokens[l + 1] * (cfg.merge == MergeKind::Rearrange ? 4 : 9) * ch[l] * ch[l + 1];
  }
  for (std::size_t l = 0; l + 1 < S; ++l) {
    f += tokens[l + 1] * ch[l + 1] * 4 * ch[l];
    f += tokens[l] * 2 * ch[l] * ch[l];
    for (std::size_t k = 0; k < cfg.decoder_depths[l]; ++k) f += block(ch[l], cfg.decoder_mixers[l], tokens[l]);
  }
  f += pixels * ch[0] * cfg.num_classes;
  return f;
}

/// Shapes seen at each stage boundary of a forward pass.
struct ForwardTrace {
  std::vector<std::pair<std::string, Shape>> entries;
  void record(std::string name, const Shape& s) { entries.emplace_back(std::move(name), s); }
};

// ---------------------------------------------------------------------------
// Layers. Each reads its parameters from `params` under `prefix`.

/// (B,T,chirps,H,W,2) -> (B,T/2,H/2,W/2,c1).
template <class T>
Var<T> token_embed(const Var<T>& x, const ParamStore<T>& params, const ModelConfig& cfg) {
  const Shape& s = x->value.shape();
  if (s.size() != 6) throw ShapeError("token_embed: expected rank-6 input (B,T,chirps,H,W,2), got " + shape_str(s));
  const char* axis[] = {"batch", "frames", "chirps", "height", "width", "complex"};
  const std::size_t want[] = {s[0], cfg.num_frames, cfg.num_chirps, cfg.height, cfg.width, 2};
  for (int a = 1; a < 6; ++a)
    if (s[a] != want[a])
      throw ShapeError(std::string("token_embed: axis '") + axis[a] + "' has extent " + std::to_string(s[a]) +
                       ", expected " + std::to_string(want[a]));
  const std::size_t B = s[0], T_ = s[1], Ch = s[2], H = s[3], W = s[4];
  // Chirp and real/imag axes become input channels of a 1x1 spatial map.
  auto v = ops::permute(x, {0, 1, 3, 4, 2, 5});
  v = ops::reshape(v, Shape{B, T_, H, W, Ch * 2});
  if (cfg.embed == EmbedKind::ChirpConv) {
    v = ops::linear(v, params.var("embed.chirp.weight"), params.var("embed.chirp.bias"));
    v = ops::space_to_depth(v, 2, 2, 2);
    return ops::linear(v, params.var("embed.patch.weight"), params.var("embed.patch.bias"));
  }
  v = ops::group_mean(v, Ch);
  v = ops::linear(v, params.var("embed.chirp.weight"), params.var("embed.chirp.bias"));
  v = ops::space_to_depth(v, 2, 2, 2);
  v = ops::group_mean(v, 8);
  return ops::linear(v, params.var("embed.patch.weight"), params.var("embed.patch.bias"));
}

/// Pointwise expansion -> GELU -> depthwise 3D conv -> pointwise projection.
template <class T>
Var<T> sepconv_mixer(const Var<T>& t, const ParamStore<T>& params, const std::string& prefix) {
  require_rank(t->value.shape(), 5, "sepconv_mixer");
  auto v = ops::linear(t, params.var(prefix + ".pw1.weight"), params.var(prefix + ".pw1.bias"));
  v = ops::gelu(v);
  v = ops::depthwise_conv3d(v, params.var(prefix + ".dw.weight"), params.var(prefix + ".dw.bias"));
  return ops::linear(v, params.var(prefix + ".pw2.weight"), params.var(prefix + ".pw2.bias"));
}

/// Global multi-head self-attention over all T'*H'*W' tokens.
template <class T>
Var<T> attention_mixer(const Var<T>& t, const ParamStore<T>& params, const std::string& prefix,
                       std::size_t heads) {
  const Shape s = t->value.shape();
  require_rank(s, 5, "attention_mixer");
  const std::size_t C = s[4];
  if (heads == 0 || C % heads != 0)
    throw ConfigError("attention_mixer: channels " + std::to_string(C) + " not divisible by heads " +
                      std::to_string(heads));
  auto v = ops::reshape(t, Shape{s[0], s[1] * s[2] * s[3], C});
  v = ops::linear(v, params.var(prefix + ".qkv.weight"), params.var(prefix + ".qkv.bias"));
  v = ops::multi_head_attention(v, heads);
  v = ops::linear(v, params.var(prefix + ".proj.weight"), params.var(prefix + ".proj.bias"));
  return ops::reshape(v, s);
}

/// t + mixer(norm(t)), then t + mlp(norm(t)).
template <class T>
Var<T> metaformer_block(const Var<T>& t, const ParamStore<T>& params, const std::string& prefix,
                        const ModelConfig& cfg, MixerKind kind) {
  const T eps = static_cast<T>(cfg.norm_eps);
  auto h = ops::layer_norm(t, params.var(prefix + ".norm1.scale"), eps);
  h = kind == MixerKind::SepConv ? sepconv_mixer(h, params, prefix + ".mixer")
                                 : attention_mixer(h, params, prefix + ".mixer", cfg.attn_heads);
  auto x = ops::add(t, h);
  h = ops::layer_norm(x, params.var(prefix + ".norm2.scale"), eps);
  h = ops::linear(h, params.var(prefix + ".mlp.fc1.weight"), params.var(prefix + ".mlp.fc1.bias"));
  h = ops::gelu(h);
  h = ops::linear(h, params.var(prefix + ".mlp.fc2.weight"), params.var(prefix + ".mlp.fc2.bias"));
  return ops::add(x, h);
}

/// Parameter-free 2x2 spatial rearrangement: (B,T,H,W,C) -> (B,T,H/2,W/2,4C)
/// with channel blocks ordered (2i,2j), (2i,2j+1), (2i+1,2j), (2i+1,2j+1).
template <class T>
Var<T> token_rearrange(const Var<T>& t) {
  const Shape& s = t->value.shape();
  require_rank(s, 5, "token_rearrange");
  if (s[2] % 2 || s[3] % 2)
    throw ShapeError("token_rearrange: odd spatial extent " + shape_str(s) + " (height and width must be even)");
  return ops::space_to_depth(t, 1, 2, 2);
}

/// Inverse of token_rearrange.
template <class T>
Var<T> token_unarrange(const Var<T>& t) {
  return ops::depth_to_space(t, 1, 2, 2);
}

/// Spatial 2x2 token merge followed by norm and projection to the next width.
template <class T>
Var<T> token_merge(const Var<T>& t, const ParamStore<T>& params, const std::string& prefix,
                   const ModelConfig& cfg) {
  const Shape& s = t->value.shape();
  require_rank(s, 5, "token_merge");
  if (s[2] % 2 || s[3] % 2)
    throw ShapeError("token_merge: odd spatial extent " + shape_str(s) + " (height and width must be even)");
  if (cfg.merge == MergeKind::Conv) {
    auto v = ops::spatial_patches(t, 3, 2, 1);
    return ops::linear(v, params.var(prefix + ".conv.weight"), params.var(prefix + ".conv.bias"));
  }
  auto v = token_rearrange(t);
  v = ops::layer_norm(v, params.var(prefix + ".norm.scale"), static_cast<T>(cfg.norm_eps));
  return ops::linear(v, params.var(prefix + ".proj.weight"), params.var(prefix + ".proj.bias"));
}

/// Transposed convolution with kernel and stride 1x2x2:
/// (B,T,H,W,C) -> (B,T,2H,2W,C').
template <class T>
Var<T> token_split(const Var<T>& t, const ParamStore<T>& params, const std::string& prefix) {
  require_rank(t->value.shape(), 5, "token_split");
  auto v = ops::linear(t, params.var(prefix + ".weight"));
  v = ops::depth_to_space(v, 1, 2, 2);
  return ops::add_channel_bias(v, params.var(prefix + ".bias"));
}

/// Channel concat of decoder and encoder tokens, projected back to the decoder width.
template <class T>
Var<T> skip_fuse(const Var<T>& dec, const Var<T>& enc, const ParamStore<T>& params, const std::string& prefix) {
  const Shape& a = dec->value.shape();
  const Shape& b = enc->value.shape();
  require_rank(a, 5, "skip_fuse decoder");
  require_rank(b, 5, "skip_fuse encoder");
  if (!std::equal(a.begin(), a.end() - 1, b.begin()))
    throw ShapeError("skip_fuse: decoder tokens " + shape_str(a) + " do not align with encoder tokens " +
                     shape_str(b));
  auto v = ops::concat_channels(dec, enc);
  return ops::linear(v, params.var(prefix + ".weight"), params.var(prefix + ".bias"));
}

/// (B,T/2,H/2,W/2,c1) -> (B,T,K,H,W) confidence maps in [0,1].
template <class T>
Var<T> output_head(const Var<T>& t, const ParamStore<T>& params, const ModelConfig& cfg) {
  require_rank(t->value.shape(), 5, "output_head");
  auto v = ops::layer_norm(t, params.var("head.norm.scale"), static_cast<T>(cfg.norm_eps));
  v = ops::upsample_linear2(v, 1);
  v = ops::upsample_linear2(v, 2);
  v = ops::upsample_linear2(v, 3);
  v = ops::linear(v, params.var("head.weight"), params.var("head.bias"));
  v = ops::sigmoid(v);
  return ops::permute(v, {0, 1, 4, 2, 3});
}

/// Full network: RF window (B,T,chirps,H,W,2) -> confidence maps (B,T,K,H,W).
template <class T>
Var<T> forward(const Var<T>& x, const ParamStore<T>& params, const ModelConfig& cfg, ForwardTrace* trace = nullptr) {
  cfg.validate();
  const std::size_t S = cfg.num_stages();
  auto t = token_embed(x, params, cfg);
  if (trace) trace->record("embed", t->value.shape());
  std::vector<Var<T>> skips;
  for (std::size_t l = 0; l < S; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    for (std::size_t k = 0; k < cfg.stage_depths[l]; ++k)
      t = metaformer_block(t, params, p + ".block." + std::to_string(k), cfg, cfg.stage_mixers[l]);
    if (trace) trace->record(p, t->value.shape());
    if (l + 1 < S) {
      skips.push_back(t);
      t = token_merge(t, params, p + ".merge", cfg);
      if (trace) trace->record(p + ".merge", t->value.shape());
    }
  }
  for (std::size_t l = S - 1; l-- > 0;) {
    const std::string p = "decoder." + std::to_string(l);
    t = token_split(t, params, p + ".split");
    if (trace) trace->record(p + ".split", t->value.shape());
    t = skip_fuse(t, skips[l], params, p + ".fuse");
    skips[l].reset();
    for (std::size_t k = 0; k < cfg.decoder_depths[l]; ++k)
      t = metaformer_block(t, params, p + ".block." + std::to_string(k), cfg, cfg.decoder_mixers[l]);
    if (trace) trace->record(p, t->value.shape());
  }
  auto out = output_head(t, params, cfg);
  if (trace) trace->record("head", out->value.shape());
  return out;
}

/// Convenience overload on plain arrays (no gradient).
template <class T>
Tensor<T> predict(const Tensor<T>& x, const ParamStore<T>& params, const ModelConfig& cfg) {
  return forward(constant(x), params, cfg)->value;
}

}  // namespace mradnet
