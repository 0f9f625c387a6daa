// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mradnet/autograd.hpp"
#include "mradnet/tensor.hpp"

// Differentiable primitives over channels-last arrays. Every function takes
// and returns Var<T>; when no input requires a gradient the result carries no
// graph.

namespace mradnet::ops {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

namespace detail {

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0, n = dst.numel(); i < n; ++i) d[i] += s[i];
}

inline std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

template <class T>
Tensor<T> permute_data(const Tensor<T>& in, const std::vector<std::size_t>& perm) {
  const Shape& is = in.shape();
  const std::size_t r = is.size();
  Shape os(r);
  std::vector<std::size_t> istride(r, 1), ostride_in(r);
  for (std::size_t i = r; i-- > 1;) istride[i - 1] = istride[i] * is[i];
  for (std::size_t i = 0; i < r; ++i) {
    os[i] = is[perm[i]];
    ostride_in[i] = istride[perm[i]];
  }
  Tensor<T> out(os);
  if (out.numel() == 0) return out;
  std::vector<std::size_t> idx(r, 0);
  const T* src = in.data();
  T* dst = out.data();
  const std::size_t inner = os[r - 1];
  const std::size_t inner_stride = ostride_in[r - 1];
  std::size_t base = 0;
  for (std::size_t o = 0, n = out.numel(); o < n; o += inner) {
    const T* p = src + base;
    for (std::size_t k = 0; k < inner; ++k) dst[o + k] = p[k * inner_stride];
    // odometer over the leading output axes
    for (std::size_t a = r - 1; a-- > 0;) {
      ++idx[a];
      base += ostride_in[a];
      if (idx[a] < os[a]) break;
      base -= ostride_in[a] * os[a];
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace detail

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Shape orig = x->value.shape();
  return make_result<T>(x->value.reshaped(std::move(shape)), {x}, [orig](Node<T>& self) {
    detail::accumulate(self.inputs[0]->grad_slot(), self.grad.reshaped(orig));
  });
}

/// Output axis i is input axis perm[i].
template <class T>
Var<T> permute(const Var<T>& x, std::vector<std::size_t> perm) {
  if (perm.size() != x->value.rank()) throw ShapeError("permute: rank mismatch");
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return make_result<T>(detail::permute_data(x->value, perm), {x}, [inverse](Node<T>& self) {
    detail::accumulate(self.inputs[0]->grad_slot(), detail::permute_data(self.grad, inverse));
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a->value.shape() != b->value.shape())
    throw ShapeError("add: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  Tensor<T> out = a->value;
  detail::accumulate(out, b->value);
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) detail::accumulate(in->grad_slot(), self.grad);
  });
}

/// Adds a per-channel bias along the last axis.
template <class T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
  const std::size_t c = detail::last_dim(x->value.shape());
  if (bias->value.numel() != c) throw ShapeError("add_channel_bias: bias length mismatch");
  Tensor<T> out = x->value;
  const std::size_t rows = out.numel() / c;
  MatMap<T>(out.data(), rows, c).rowwise() += ConstRowVecMap<T>(bias->value.data(), c);
  return make_result<T>(std::move(out), {x, bias}, [rows, c](Node<T>& self) {
    if (wants_grad(self.inputs[0])) detail::accumulate(self.inputs[0]->grad_slot(), self.grad);
    if (wants_grad(self.inputs[1]))
      RowVecMap<T>(self.inputs[1]->grad_slot().data(), c) +=
          ConstMatMap<T>(self.grad.data(), rows, c).colwise().sum();
  });
}

/// Pointwise linear map over the last axis: y = x W + b, W shaped (in, out).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = nullptr) {
  const Shape& xs = x->value.shape();
  const Shape& ws = weight->value.shape();
  if (ws.size() != 2 || xs.empty() || xs.back() != ws[0])
    throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  const std::size_t ci = ws[0], co = ws[1], rows = x->value.numel() / ci;
  if (bias && bias->value.numel() != co) throw ShapeError("linear: bias length mismatch");
  Shape os = xs;
  os.back() = co;
  Tensor<T> out(os);
  MatMap<T> y(out.data(), rows, co);
  y.noalias() = ConstMatMap<T>(x->value.data(), rows, ci) * ConstMatMap<T>(weight->value.data(), ci, co);
  if (bias) y.rowwise() += ConstRowVecMap<T>(bias->value.data(), co);
  std::vector<Var<T>> ins{x, weight};
  if (bias) ins.push_back(bias);
  return make_result<T>(std::move(out), std::move(ins), [rows, ci, co](Node<T>& self) {
    ConstMatMap<T> dy(self.grad.data(), rows, co);
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    if (xin->requires_grad)
      MatMap<T>(xin->grad_slot().data(), rows, ci).noalias() +=
          dy * ConstMatMap<T>(win->value.data(), ci, co).transpose();
    if (win->requires_grad)
      MatMap<T>(win->grad_slot().data(), ci, co).noalias() +=
          ConstMatMap<T>(xin->value.data(), rows, ci).transpose() * dy;
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
      RowVecMap<T>(self.inputs[2]->grad_slot().data(), co) += dy.colwise().sum();
  });
}

/// (B,T,H,W,C) -> (B,T/kt,H/kh,W/kw,kt*kh*kw*C). Channel index is
/// ((dt*kh + dh)*kw + dw)*C + c, so a 1x2x2 block is laid out as
/// (2i,2j), (2i,2j+1), (2i+1,2j), (2i+1,2j+1).
template <class T>
Var<T> space_to_depth(const Var<T>& x, std::size_t kt, std::size_t kh, std::size_t kw) {
  const Shape& s = x->value.shape();
  require_rank(s, 5, "space_to_depth");
  const char* names[] = {"batch", "time", "height", "width"};
  const std::size_t k[] = {1, kt, kh, kw};
  for (int a = 1; a < 4; ++a)
    if (s[a] % k[a] != 0)
      throw ShapeError(std::string("space_to_depth: ") + names[a] + " axis extent " +
                       std::to_string(s[a]) + " not divisible by " + std::to_string(k[a]));
  const std::size_t B = s[0], T_ = s[1] / kt, H = s[2] / kh, W = s[3] / kw, C = s[4];
  auto v = reshape(x, Shape{B, T_, kt, H, kh, W, kw, C});
  v = permute(v, {0, 1, 3, 5, 2, 4, 6, 7});
  return reshape(v, Shape{B, T_, H, W, kt * kh * kw * C});
}

/// Inverse of space_to_depth.
template <class T>
Var<T> depth_to_space(const Var<T>& x, std::size_t kt, std::size_t kh, std::size_t kw) {
  const Shape& s = x->value.shape();
  require_rank(s, 5, "depth_to_space");
  const std::size_t k = kt * kh * kw;
  if (s[4] % k != 0) throw ShapeError("depth_to_space: channels not divisible by block size");
  const std::size_t B = s[0], T_ = s[1], H = s[2], W = s[3], C = s[4] / k;
  auto v = reshape(x, Shape{B, T_, H, W, kt, kh, kw, C});
  v = permute(v, {0, 1, 4, 2, 5, 3, 6, 7});
  return reshape(v, Shape{B, T_ * kt, H * kh, W * kw, C});
}

/// Zero-padded spatial patch gather (1 x k x k window, stride s) on
/// (B,T,H,W,C) -> (B,T,Ho,Wo,k*k*C). Used for strided convolutions.
template <class T>
Var<T> spatial_patches(const Var<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
  const Shape& s = x->value.shape();
  require_rank(s, 5, "spatial_patches");
  const std::size_t B = s[0], T_ = s[1], H = s[2], W = s[3], C = s[4];
  if (H + 2 * pad < k || W + 2 * pad < k) throw ShapeError("spatial_patches: window larger than input");
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  const std::size_t KC = k * k * C;
  // index map: output element -> input element or npos for padding
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> src(B * T_ * Ho * Wo * k * k, npos);
  std::size_t q = 0;
  for (std::size_t bt = 0; bt < B * T_; ++bt)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j)
        for (std::size_t di = 0; di < k; ++di)
          for (std::size_t dj = 0; dj < k; ++dj, ++q) {
            const long hi = static_cast<long>(i * stride + di) - static_cast<long>(pad);
            const long wj = static_cast<long>(j * stride + dj) - static_cast<long>(pad);
            if (hi >= 0 && wj >= 0 && hi < static_cast<long>(H) && wj < static_cast<long>(W))
              src[q] = ((bt * H + static_cast<std::size_t>(hi)) * W + static_cast<std::size_t>(wj)) * C;
          }
  Tensor<T> out(Shape{B, T_, Ho, Wo, KC});
  for (std::size_t p = 0; p < src.size(); ++p)
    if (src[p] != npos) std::copy_n(x->value.data() + src[p], C, out.data() + p * C);
  return make_result<T>(std::move(out), {x}, [src = std::move(src), C](Node<T>& self) {
    T* g = self.inputs[0]->grad_slot().data();
    const T* dy = self.grad.data();
    for (std::size_t p = 0; p < src.size(); ++p)
      if (src[p] != npos)
        for (std::size_t c = 0; c < C; ++c) g[src[p] + c] += dy[p * C + c];
  });
}

/// Last axis viewed as (groups, C); returns the mean over groups.
template <class T>
Var<T> group_mean(const Var<T>& x, std::size_t groups) {
  Shape s = x->value.shape();
  if (s.empty() || s.back() % groups != 0) throw ShapeError("group_mean: channels not divisible by groups");
  const std::size_t C = s.back() / groups, rows = x->value.numel() / s.back();
  s.back() = C;
  Tensor<T> out(s);
  const T inv = T{1} / static_cast<T>(groups);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t c = 0; c < C; ++c) out[r * C + c] += x->value[(r * groups + g) * C + c] * inv;
  return make_result<T>(std::move(out), {x}, [rows, groups, C, inv](Node<T>& self) {
    T* g = self.inputs[0]->grad_slot().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < groups; ++k)
        for (std::size_t c = 0; c < C; ++c) g[(r * groups + k) * C + c] += self.grad[r * C + c] * inv;
  });
}

/// Per-token channel normalisation with a learnable scale and no shift.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& scale, T eps) {
  const std::size_t C = detail::last_dim(x->value.shape());
  if (scale->value.numel() != C) throw ShapeError("layer_norm: scale length mismatch");
  const std::size_t rows = x->value.numel() / C;
  Tensor<T> out(x->value.shape());
  Tensor<T> xhat(x->value.shape());
  std::vector<T> rstd(rows);
  const T* g = scale->value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x->value.data() + r * C;
    T mean{}, var{};
    for (std::size_t c = 0; c < C; ++c) mean += xr[c];
    mean /= static_cast<T>(C);
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(C);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xr[c] - mean) * rstd[r];
      xhat[r * C + c] = h;
      out[r * C + c] = h * g[c];
    }
  }
  return make_result<T>(std::move(out), {x, scale},
                        [xhat = std::move(xhat), rstd = std::move(rstd), rows, C](Node<T>& self) {
    const T* dy = self.grad.data();
    const T* g = self.inputs[1]->value.data();
    if (self.inputs[1]->requires_grad) {
      T* dg = self.inputs[1]->grad_slot().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < C; ++c) dg[c] += dy[r * C + c] * xhat[r * C + c];
    }
    if (self.inputs[0]->requires_grad) {
      T* dx = self.inputs[0]->grad_slot().data();
      for (std::size_t r = 0; r < rows; ++r) {
        T m1{}, m2{};
        for (std::size_t c = 0; c < C; ++c) {
          const T dh = dy[r * C + c] * g[c];
          m1 += dh;
          m2 += dh * xhat[r * C + c];
        }
        m1 /= static_cast<T>(C);
        m2 /= static_cast<T>(C);
        for (std::size_t c = 0; c < C; ++c) {
          const T dh = dy[r * C + c] * g[c];
          dx[r * C + c] += rstd[r] * (dh - m1 - xhat[r * C + c] * m2);
        }
      }
    }
  });
}

/// Exact (erf) GELU.
template <class T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T inv_sqrt2 = T{1} / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T v = x->value[i];
    out[i] = T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2));
  }
  return make_result<T>(std::move(out), {x}, [inv_sqrt2](Node<T>& self) {
    const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    const auto& xv = self.inputs[0]->value;
    T* dx = self.inputs[0]->grad_slot().data();
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const T v = xv[i];
      const T d = T{0.5} * (T{1} + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T{-0.5} * v * v);
      dx[i] += self.grad[i] * d;
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = T{1} / (T{1} + std::exp(-x->value[i]));
  Tensor<T> saved = out;
  return make_result<T>(std::move(out), {x}, [y = std::move(saved)](Node<T>& self) {
    T* dx = self.inputs[0]->grad_slot().data();
    for (std::size_t i = 0; i < y.numel(); ++i) dx[i] += self.grad[i] * y[i] * (T{1} - y[i]);
  });
}

/// Depthwise 3D convolution on (B,T,H,W,C) with "same" zero padding.
/// weight is (kt,kh,kw,C), bias is (C).
template <class T>
Var<T> depthwise_conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& s = x->value.shape();
  require_rank(s, 5, "depthwise_conv3d");
  const Shape& ks = weight->value.shape();
  require_rank(ks, 4, "depthwise_conv3d weight");
  const std::size_t B = s[0], TT = s[1], H = s[2], W = s[3], C = s[4];
  if (ks[3] != C || bias->value.numel() != C) throw ShapeError("depthwise_conv3d: channel mismatch");
  const std::array<std::size_t, 3> ext{TT, H, W};
  const std::array<std::size_t, 3> k{ks[0], ks[1], ks[2]};
  for (int a = 0; a < 3; ++a)
    if (k[a] % 2 == 0) throw ShapeError("depthwise_conv3d: kernel extents must be odd");

  // Visits every (output voxel, kernel tap, input voxel) triple inside bounds.
  auto for_each_tap = [B, TT, H, W, C, k, ext](auto&& fn) {
    const long pt = static_cast<long>(k[0] / 2), ph = static_cast<long>(k[1] / 2), pw = static_cast<long>(k[2] / 2);
    for (std::size_t b = 0; b < B; ++b)
      for (long t = 0; t < static_cast<long>(TT); ++t)
        for (long h = 0; h < static_cast<long>(H); ++h)
          for (long w = 0; w < static_cast<long>(W); ++w) {
            const std::size_t out_off = (((b * TT + t) * H + h) * W + w) * C;
            for (long dt = 0; dt < static_cast<long>(k[0]); ++dt) {
              const long ti = t + dt - pt;
              if (ti < 0 || ti >= static_cast<long>(ext[0])) continue;
              for (long dh = 0; dh < static_cast<long>(k[1]); ++dh) {
                const long hi = h + dh - ph;
                if (hi < 0 || hi >= static_cast<long>(ext[1])) continue;
                for (long dw = 0; dw < static_cast<long>(k[2]); ++dw) {
                  const long wi = w + dw - pw;
                  if (wi < 0 || wi >= static_cast<long>(ext[2])) continue;
                  const std::size_t in_off = (((b * TT + ti) * H + hi) * W + wi) * C;
                  const std::size_t k_off = ((dt * k[1] + dh) * k[2] + dw) * C;
                  fn(out_off, k_off, in_off);
                }
              }
            }
          }
  };

  Tensor<T> out(s);
  {
    T* y = out.data();
    const T* xv = x->value.data();
    const T* wv = weight->value.data();
    const T* bv = bias->value.data();
    for (std::size_t r = 0; r < out.numel() / C; ++r) std::copy_n(bv, C, y + r * C);
    for_each_tap([&](std::size_t o, std::size_t kk, std::size_t i) {
      for (std::size_t c = 0; c < C; ++c) y[o + c] += wv[kk + c] * xv[i + c];
    });
  }
  return make_result<T>(std::move(out), {x, weight, bias}, [for_each_tap, C](Node<T>& self) {
    const T* dy = self.grad.data();
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    auto& bin = self.inputs[2];
    if (bin->requires_grad) {
      T* db = bin->grad_slot().data();
      for (std::size_t r = 0; r < self.grad.numel() / C; ++r)
        for (std::size_t c = 0; c < C; ++c) db[c] += dy[r * C + c];
    }
    const T* xv = xin->value.data();
    const T* wv = win->value.data();
    T* dx = xin->requires_grad ? xin->grad_slot().data() : nullptr;
    T* dw = win->requires_grad ? win->grad_slot().data() : nullptr;
    if (!dx && !dw) return;
    for_each_tap([&](std::size_t o, std::size_t kk, std::size_t i) {
      if (dx)
        for (std::size_t c = 0; c < C; ++c) dx[i + c] += wv[kk + c] * dy[o + c];
      if (dw)
        for (std::size_t c = 0; c < C; ++c) dw[kk + c] += xv[i + c] * dy[o + c];
    });
  });
}

/// Multi-head scaled dot-product self-attention core. qkv is (B,N,3C) laid
/// out as [q | k | v]; returns (B,N,C) before the output projection.
template <class T>
Var<T> multi_head_attention(const Var<T>& qkv, std::size_t heads) {
  const Shape& s = qkv->value.shape();
  require_rank(s, 3, "multi_head_attention");
  const std::size_t B = s[0], N = s[1], C3 = s[2];
  if (C3 % 3 != 0) throw ShapeError("multi_head_attention: last axis must be 3*C");
  const std::size_t C = C3 / 3;
  if (heads == 0 || C % heads != 0)
    throw ConfigError("attention channels " + std::to_string(C) + " not divisible by heads " +
                      std::to_string(heads));
  const std::size_t d = C / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(d));
  using Strided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

  const bool keep = qkv->requires_grad;
  std::vector<RowMat<T>> probs;
  if (keep) probs.reserve(B * heads);
  Tensor<T> out(Shape{B, N, C});
  RowMat<T> P;
  for (std::size_t b = 0; b < B; ++b) {
    const T* base = qkv->value.data() + b * N * C3;
    for (std::size_t h = 0; h < heads; ++h) {
      Strided Q(base + h * d, N, d, Eigen::OuterStride<>(C3));
      Strided K(base + C + h * d, N, d, Eigen::OuterStride<>(C3));
      Strided V(base + 2 * C + h * d, N, d, Eigen::OuterStride<>(C3));
      P.noalias() = (Q * K.transpose()) * scale;
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        auto row = P.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
      StridedMut O(out.data() + b * N * C + h * d, N, d, Eigen::OuterStride<>(C));
      O.noalias() = P * V;
      if (keep) probs.push_back(P);
    }
  }
  return make_result<T>(std::move(out), {qkv},
                        [probs = std::move(probs), B, N, C, C3, d, heads, scale](Node<T>& self) {
    T* g = self.inputs[0]->grad_slot().data();
    const T* qv = self.inputs[0]->value.data();
    RowMat<T> dP, dS;
    for (std::size_t b = 0; b < B; ++b) {
      const T* base = qv + b * N * C3;
      T* gbase = g + b * N * C3;
      for (std::size_t h = 0; h < heads; ++h) {
        const RowMat<T>& P = probs[b * heads + h];
        Strided Q(base + h * d, N, d, Eigen::OuterStride<>(C3));
        Strided K(base + C + h * d, N, d, Eigen::OuterStride<>(C3));
        Strided V(base + 2 * C + h * d, N, d, Eigen::OuterStride<>(C3));
        Strided dO(self.grad.data() + b * N * C + h * d, N, d, Eigen::OuterStride<>(C));
        StridedMut dQ(gbase + h * d, N, d, Eigen::OuterStride<>(C3));
        StridedMut dK(gbase + C + h * d, N, d, Eigen::OuterStride<>(C3));
        StridedMut dV(gbase + 2 * C + h * d, N, d, Eigen::OuterStride<>(C3));
        dV.noalias() += P.transpose() * dO;
        dP.noalias() = dO * V.transpose();
        const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = P.cwiseProduct(dP).rowwise().sum();
        dS = (P.array() * (dP.colwise() - rowdot).array() * scale).matrix();
        dQ.noalias() += dS * K;
        dK.noalias() += dS.transpose() * Q;
      }
    }
  });
}

/// Concatenates along the last axis.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  Shape sa = a->value.shape(), sb = b->value.shape();
  if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 1, sb.begin()))
    throw ShapeError("concat_channels: " + shape_str(sa) + " vs " + shape_str(sb));
  const std::size_t ca = sa.back(), cb = sb.back(), rows = a->value.numel() / ca;
  Shape so = sa;
  so.back() = ca + cb;
  Tensor<T> out(so);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a->value.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b->value.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return make_result<T>(std::move(out), {a, b}, [rows, ca, cb](Node<T>& self) {
    const T* dy = self.grad.data();
    if (self.inputs[0]->requires_grad) {
      T* g = self.inputs[0]->grad_slot().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += dy[r * (ca + cb) + c];
    }
    if (self.inputs[1]->requires_grad) {
      T* g = self.inputs[1]->grad_slot().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += dy[r * (ca + cb) + ca + c];
    }
  });
}

/// Linear upsampling by 2 along one axis (half-pixel centres, edge clamp).
/// Output sample 2k blends x[k] and x[k-1] with weights 3/4, 1/4; sample 2k+1
/// blends x[k] and x[k+1].
template <class T>
Var<T> upsample_linear2(const Var<T>& x, std::size_t axis) {
  const Shape& s = x->value.shape();
  if (axis >= s.size()) throw ShapeError("upsample_linear2: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t L = s[axis];
  Shape so = s;
  so[axis] = 2 * L;
  Tensor<T> out(so);
  const T near = T{0.75}, far = T{0.25};
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x->value.data() + o * L * inner;
    T* dst = out.data() + o * 2 * L * inner;
    for (std::size_t k = 0; k < L; ++k) {
      const T* c = src + k * inner;
      const T* lo = src + (k == 0 ? 0 : k - 1) * inner;
      const T* hi = src + (k + 1 == L ? k : k + 1) * inner;
      T* e = dst + 2 * k * inner;
      T* od = dst + (2 * k + 1) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        e[i] = near * c[i] + far * lo[i];
        od[i] = near * c[i] + far * hi[i];
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [outer, inner, L, near, far](Node<T>& self) {
    T* g = self.inputs[0]->grad_slot().data();
    for (std::size_t o = 0; o < outer; ++o) {
      T* src = g + o * L * inner;
      const T* dst = self.grad.data() + o * 2 * L * inner;
      for (std::size_t k = 0; k < L; ++k) {
        T* c = src + k * inner;
        T* lo = src + (k == 0 ? 0 : k - 1) * inner;
        T* hi = src + (k + 1 == L ? k : k + 1) * inner;
        const T* e = dst + 2 * k * inner;
        const T* od = dst + (2 * k + 1) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          c[i] += near * (e[i] + od[i]);
          lo[i] += far * e[i];
          hi[i] += far * od[i];
        }
      }
    }
  });
}

/// Mean-reduced Smooth L1: 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
template <class T>
Var<T> smooth_l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  if (pred->value.shape() != target.shape())
    throw ShapeError("smooth_l1_loss: " + shape_str(pred->value.shape()) + " vs " + shape_str(target.shape()));
  const std::size_t n = target.numel();
  if (n == 0) throw ShapeError("smooth_l1_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred->value[i]) - static_cast<double>(target[i]);
    const double a = std::abs(d);
    acc += a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  Tensor<T> out(Shape{1}, static_cast<T>(acc / static_cast<double>(n)));
  return make_result<T>(std::move(out), {pred}, [target, n](Node<T>& self) {
    T* g = self.inputs[0]->grad_slot().data();
    const T upstream = self.grad[0] / static_cast<T>(n);
    const auto& p = self.inputs[0]->value;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = p[i] - target[i];
      const T slope = std::abs(d) < T{1} ? d : (d > 0 ? T{1} : T{-1});
      g[i] += upstream * slope;
    }
  });
}

}  // namespace mradnet::ops
