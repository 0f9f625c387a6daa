// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/model.hpp"
#include "mradnet/train.hpp"

// Container layout:
//   bytes 0..7    magic "MRADCKPT"
//   bytes 8..11   u32 format version
//   bytes 12..19  u64 header length L
//   next L bytes  JSON header: model_config, train_config, state, arrays
//   payload       raw little-endian arrays; each array entry records
//                 name, dtype, shape and byte offset into the payload
// Array names are "param/<path>", "adam_m/<path>" and "adam_v/<path>".

namespace mradnet {

inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'A', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  TrainState<T> state;
};

namespace detail {

template <class T>
constexpr const char* ckpt_dtype() {
  if constexpr (std::is_same_v<T, float>) return "<f4";
  else if constexpr (std::is_same_v<T, double>) return "<f8";
  else static_assert(sizeof(T) == 0, "unsupported checkpoint element type");
}

inline const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::Weight: return "weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::Scale: return "scale";
  }
  return "weight";
}

inline ParamRole role_of(const std::string& s) {
  if (s == "weight") return ParamRole::Weight;
  if (s == "bias") return ParamRole::Bias;
  if (s == "scale") return ParamRole::Scale;
  throw DataError("checkpoint: unknown parameter role '" + s + "'");
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck) {
  static_assert(std::endian::native == std::endian::little);
  nlohmann::json header;
  header["model_config"] = ck.model;
  header["train_config"] = ck.train;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : ck.state.history) hist.push_back({r.step, r.epoch, r.lr, r.loss});
  header["state"] = {{"step", ck.state.step},
                     {"epoch", ck.state.epoch},
                     {"optimizer_step", ck.state.optimizer.step},
                     {"rng_state", ck.state.rng_state},
                     {"history", hist}};
  nlohmann::json arrays = nlohmann::json::array();
  std::vector<const Tensor<T>*> payload;
  std::size_t offset = 0;
  auto push = [&](const std::string& name, const Tensor<T>& t, nlohmann::json extra) {
    extra["name"] = name;
    extra["dtype"] = detail::ckpt_dtype<T>();
    extra["shape"] = t.shape();
    extra["offset"] = offset;
    arrays.push_back(std::move(extra));
    payload.push_back(&t);
    offset += t.numel() * sizeof(T);
  };
  for (const auto& [name, p] : ck.state.params)
    push("param/" + name, p.var->value, {{"role", detail::role_name(p.role)}, {"channel_rows", p.channel_rows}});
  for (const auto& [name, m] : ck.state.optimizer.moments) {
    push("adam_m/" + name, m.m, nlohmann::json::object());
    push("adam_v/" + name, m.v, nlohmann::json::object());
  }
  header["arrays"] = arrays;
  const std::string h = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint: " + tmp.string());
    f.write(kCheckpointMagic, 8);
    const std::uint32_t ver = kCheckpointVersion;
    const std::uint64_t len = h.size();
    f.write(reinterpret_cast<const char*>(&ver), 4);
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto* t : payload)
      f.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->numel() * sizeof(T)));
    f.flush();
    if (!f) throw DataError("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + where);
  char magic[8];
  std::uint32_t ver = 0;
  std::uint64_t len = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&ver), 4);
  f.read(reinterpret_cast<char*>(&len), 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError(where + ": not a checkpoint file");
  if (ver != kCheckpointVersion) throw DataError(where + ": unsupported checkpoint version " + std::to_string(ver));
  if (len > (std::uint64_t{1} << 32)) throw DataError(where + ": implausible header length");
  std::string h(len, '\0');
  f.read(h.data(), static_cast<std::streamsize>(len));
  if (!f) throw DataError(where + ": truncated checkpoint header");
  const std::streamoff base = f.tellg();

  Checkpoint<T> ck;
  try {
    const auto header = nlohmann::json::parse(h);
    ck.model = header.at("model_config").get<ModelConfig>();
    ck.train = header.at("train_config").get<TrainConfig>();
    const auto& st = header.at("state");
    ck.state.step = st.at("step").get<std::size_t>();
    ck.state.epoch = st.at("epoch").get<std::size_t>();
    ck.state.optimizer.step = st.at("optimizer_step").get<std::size_t>();
    ck.state.rng_state = st.at("rng_state").get<std::string>();
    for (const auto& r : st.at("history"))
      ck.state.history.push_back(
          {r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<double>(), r.at(3).get<double>()});
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      if (a.at("dtype").get<std::string>() != detail::ckpt_dtype<T>())
        throw DataError(where + ": array '" + name + "' has dtype " + a.at("dtype").get<std::string>());
      Tensor<T> t(a.at("shape").get<Shape>());
      f.seekg(base + static_cast<std::streamoff>(a.at("offset").get<std::size_t>()));
      f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
      if (!f) throw DataError(where + ": truncated payload for '" + name + "'");
      const auto slash = name.find('/');
      const auto kind = name.substr(0, slash), path_name = name.substr(slash + 1);
      if (kind == "param") {
        ck.state.params.add(path_name, std::move(t), detail::role_of(a.at("role").get<std::string>()),
                            a.at("channel_rows").get<bool>());
      } else if (kind == "adam_m") {
        ck.state.optimizer.moments[path_name].m = std::move(t);
      } else if (kind == "adam_v") {
        ck.state.optimizer.moments[path_name].v = std::move(t);
      } else {
        throw DataError(where + ": unknown array kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": malformed checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(where + ": checkpoint config invalid: " + e.what());
  }
  return ck;
}

/// Verifies that a parameter store carries exactly the paths and shapes the
/// config prescribes.
template <class T>
void check_params_match(const ParamStore<T>& params, const ModelConfig& cfg) {
  std::vector<std::string> problems;
  const auto specs = param_specs(cfg);
  for (const auto& s : specs) {
    if (!params.contains(s.path)) {
      problems.push_back("missing parameter " + s.path);
    } else if (params.at(s.path).var->value.shape() != s.shape) {
      problems.push_back("parameter " + s.path + " has shape " + shape_str(params.at(s.path).var->value.shape()) +
                         ", expected " + shape_str(s.shape));
    }
  }
  if (params.size() != specs.size()) problems.push_back("parameter count differs from config");
  if (!problems.empty()) throw DataError(problems.front() + (problems.size() > 1 ? " (and more)" : ""));
}

}  // namespace mradnet
