// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mradnet/errors.hpp"
#include "mradnet/tensor.hpp"

namespace mradnet::png {

/// 8-bit RGB raster, row-major.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}
  std::uint8_t* px(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
  const std::uint8_t* px(std::size_t x, std::size_t y) const { return rgb.data() + (y * width + x) * 3; }
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace detail

/// PNG byte stream: colour type 2, bit depth 8, filter 0 on every row,
/// zlib level 9. Output depends only on the pixels.
inline std::string encode(const Image& img) {
  if (img.width == 0 || img.height == 0) throw ShapeError("png: empty image");
  std::string raw;
  raw.reserve(img.height * (img.width * 3 + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(img.px(0, y)), img.width * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw DataError("png: compression failed");
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);
  detail::chunk(out, "IHDR", ihdr);
  detail::chunk(out, "IDAT", z);
  detail::chunk(out, "IEND", "");
  return out;
}

inline void write(const std::filesystem::path& path, const Image& img) {
  const std::string bytes = encode(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

/// Heatmap of one frame's (K,H,W) maps: row = range bin, column = azimuth
/// bin, class k drives colour channel k % 3. Each pixel becomes a
/// scale x scale block.
inline Image heatmap(const float* maps, std::size_t K, std::size_t H, std::size_t W, std::size_t scale) {
  if (scale == 0) throw ConfigError("plot scale must be positive");
  Image img(W * scale, H * scale);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      std::uint8_t c[3] = {0, 0, 0};
      for (std::size_t k = 0; k < K; ++k) {
        const double v = std::clamp(static_cast<double>(maps[(k * H + i) * W + j]), 0.0, 1.0);
        c[k % 3] = std::max(c[k % 3], static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
      for (std::size_t y = i * scale; y < (i + 1) * scale; ++y)
        for (std::size_t x = j * scale; x < (j + 1) * scale; ++x) std::copy_n(c, 3, img.px(x, y));
    }
  return img;
}

/// White cross centred on bin (row, col), arm length `arm` pixels in the
/// scaled canvas, clipped at the border.
inline void draw_marker(Image& img, std::size_t row, std::size_t col, std::size_t scale, std::size_t arm) {
  const long cy = static_cast<long>(row * scale + scale / 2), cx = static_cast<long>(col * scale + scale / 2);
  auto set = [&](long x, long y) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
    std::fill_n(img.px(static_cast<std::size_t>(x), static_cast<std::size_t>(y)), 3, std::uint8_t{255});
  };
  const long a = static_cast<long>(arm);
  for (long d = -a; d <= a; ++d) {
    set(cx + d, cy);
    set(cx, cy + d);
  }
}

}  // namespace mradnet::png
