// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "mradnet/autograd.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/tensor.hpp"

namespace mradnet {

enum class ParamRole : std::uint8_t { Weight, Bias, Scale };

/// Weights are stored (in, out) for linear maps and (kt,kh,kw,C) for
/// depthwise kernels. `channel_rows` marks weights whose output-channel
/// grouping runs along rows rather than columns (transposed convolutions),
/// which matters for per-channel optimizer statistics.
template <class T>
struct Param {
  Var<T> var;
  ParamRole role = ParamRole::Weight;
  bool channel_rows = false;

  const Tensor<T>& value() const { return var->value; }
  Tensor<T>& value() { return var->value; }
  Tensor<T>& grad() { return var->grad_slot(); }
};

/// Named learnable arrays keyed by hierarchical path ("encoder.0.block.1.mlp.fc1.weight").
/// Copies are deep.
template <class T>
class ParamStore {
public:
  ParamStore() = default;
  ParamStore(const ParamStore& other) { *this = other; }
  ParamStore& operator=(const ParamStore& other) {
    if (this == &other) return *this;
    params_.clear();
    for (const auto& [k, p] : other.params_) {
      auto v = std::make_shared<Node<T>>();
      v->value = p.var->value;
      v->requires_grad = p.var->requires_grad;
      params_.emplace(k, Param<T>{v, p.role, p.channel_rows});
    }
    return *this;
  }
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Param<T>& add(const std::string& path, Tensor<T> value, ParamRole role, bool channel_rows = false) {
    if (params_.count(path)) throw ConfigError("duplicate parameter path: " + path);
    auto [it, ok] = params_.emplace(path, Param<T>{variable(std::move(value)), role, channel_rows});
    return it->second;
  }

  bool contains(const std::string& path) const { return params_.count(path) != 0; }

  const Var<T>& var(const std::string& path) const { return at(path).var; }

  Param<T>& at(const std::string& path) {
    auto it = params_.find(path);
    if (it == params_.end()) throw ConfigError("missing parameter: " + path);
    return it->second;
  }
  const Param<T>& at(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw ConfigError("missing parameter: " + path);
    return it->second;
  }

  /// Total number of scalar parameters.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [k, p] : params_) n += p.var->value.numel();
    return n;
  }
  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& [k, p] : params_) p.var->grad = Tensor<T>();
  }

  /// A frozen store builds no graph during forward passes.
  void set_trainable(bool trainable) {
    for (auto& [k, p] : params_) p.var->requires_grad = trainable;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, p] : params_) out.add(k, p.var->value.template cast<U>(), p.role, p.channel_rows);
    return out;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

private:
  std::map<std::string, Param<T>> params_;
};

/// Normal samples truncated to +-2 standard deviations.
template <class T>
Tensor<T> truncated_normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> out(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double z;
    do z = dist(rng);
    while (std::abs(z) > 2.0);
    out[i] = static_cast<T>(z * stddev);
  }
  return out;
}

}  // namespace mradnet
