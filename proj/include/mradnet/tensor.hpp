// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mradnet/errors.hpp"

namespace mradnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

/// Allocator returning 64-byte aligned blocks. Vectorised kernels then see
/// the same alignment on every run, so results do not depend on where the
/// heap placed a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Dense row-major array with value semantics.
template <class T>
class Tensor {
public:
  using value_type = T;
  using Storage = std::vector<T, AlignedAllocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }
  Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  Storage& storage() noexcept { return data_; }
  const Storage& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Multi-index access; slow, meant for tests and small bookkeeping.
  template <class... I>
  T& at(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  const T& at(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t k = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[k]) throw ShapeError("index out of range on axis " + std::to_string(k));
      off = off * shape_[k] + i;
      ++k;
    }
    return off;
  }

  Tensor reshaped(Shape s) const& {
    if (shape_numel(s) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }
  Tensor reshaped(Shape s) && {
    if (shape_numel(s) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), std::move(data_));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    typename Tensor<U>::Storage out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Shape shape_;
  Storage data_;
};

/// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data(), a.data() + a.numel(), b.data(), [](T x, T y) {
    return std::memcmp(&x, &y, sizeof(T)) == 0;
  });
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shape mismatch");
  T m{};
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
}

}  // namespace mradnet
