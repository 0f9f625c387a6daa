// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "mradnet/errors.hpp"
#include "mradnet/tensor.hpp"

// NPY v1.0 container: "\x93NUMPY", version bytes 1 0, little-endian u16
// header length, a Python-literal dict {descr, fortran_order, shape} padded
// with spaces to a 64-byte boundary and terminated by '\n', then the raw
// little-endian C-order payload.

namespace mradnet::npy {

static_assert(std::endian::native == std::endian::little, "NPY payloads are read as little-endian");

namespace detail {

inline std::string header_dict(const std::string& descr, const Shape& shape) {
  std::ostringstream os;
  os << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) os << ',';
    if (i + 1 < shape.size()) os << ' ';
  }
  os << "), }";
  std::string h = os.str();
  const std::size_t preamble = 10;
  std::size_t total = preamble + h.size() + 1;
  h.append((64 - total % 64) % 64, ' ');
  h.push_back('\n');
  return h;
}

template <class T>
constexpr const char* descr_of() {
  if constexpr (std::is_same_v<T, float>) return "<f4";
  else if constexpr (std::is_same_v<T, double>) return "<f8";
  else static_assert(sizeof(T) == 0, "unsupported NPY element type");
}

}  // namespace detail

template <class T>
void write(const std::filesystem::path& path, const Tensor<T>& t) {
  const std::string h = detail::header_dict(detail::descr_of<T>(), t.shape());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  const char magic[] = {'\x93', 'N', 'U', 'M', 'P', 'Y', 1, 0};
  f.write(magic, sizeof magic);
  const std::uint16_t len = static_cast<std::uint16_t>(h.size());
  const char lenb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  f.write(lenb, 2);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!f) throw DataError("write failed: " + path.string());
}

struct Header {
  std::string descr;
  bool fortran_order = false;
  Shape shape;
};

inline Header parse_header(const std::string& h, const std::string& where) {
  Header out;
  std::smatch m;
  if (!std::regex_search(h, m, std::regex(R"('descr'\s*:\s*'([^']+)')")))
    throw DataError(where + ": NPY header lacks descr");
  out.descr = m[1];
  if (!std::regex_search(h, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")))
    throw DataError(where + ": NPY header lacks fortran_order");
  out.fortran_order = m[1] == "True";
  if (!std::regex_search(h, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))")))
    throw DataError(where + ": NPY header lacks shape");
  std::string dims = m[1];
  std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it)
    out.shape.push_back(static_cast<std::size_t>(std::stoull(it->str())));
  return out;
}

/// Reads a real or complex array as float. Complex payloads ('<c8', '<c16')
/// gain a trailing axis of extent 2 (real, imag).
inline Tensor<float> read_float(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + where);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw DataError(where + ": not an NPY file");
  const int major = static_cast<unsigned char>(magic[6]);
  std::size_t hlen = 0;
  if (major == 1) {
    unsigned char b[2];
    f.read(reinterpret_cast<char*>(b), 2);
    hlen = b[0] | (b[1] << 8);
  } else if (major == 2 || major == 3) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    hlen = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::size_t>(b[3]) << 24);
  } else {
    throw DataError(where + ": unsupported NPY version " + std::to_string(major));
  }
  std::string h(hlen, '\0');
  f.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw DataError(where + ": truncated NPY header");
  Header hd = parse_header(h, where);
  if (hd.fortran_order) throw DataError(where + ": fortran_order arrays are not supported");

  Shape shape = hd.shape;
  const std::size_t n = shape_numel(hd.shape);
  auto read_raw = [&](auto tag, std::size_t count) {
    using E = decltype(tag);
    std::vector<E> raw(count);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(E)));
    if (!f) throw DataError(where + ": truncated NPY payload");
    return std::vector<float>(raw.begin(), raw.end());
  };
  std::vector<float> data;
  if (hd.descr == "<f4") {
    data = read_raw(float{}, n);
  } else if (hd.descr == "<f8") {
    data = read_raw(double{}, n);
  } else if (hd.descr == "<c8") {
    data = read_raw(float{}, 2 * n);
    shape.push_back(2);
  } else if (hd.descr == "<c16") {
    data = read_raw(double{}, 2 * n);
    shape.push_back(2);
  } else {
    throw DataError(where + ": unsupported NPY dtype " + hd.descr);
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

}  // namespace mradnet::npy
