// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mradnet/errors.hpp"

namespace mradnet::manifest {

inline std::string sha1_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw DataError("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

/// Git blob id: SHA-1 of "blob <size>\0<content>".
inline std::string blob_hash(const std::string& content) {
  return sha1_hex("blob " + std::to_string(content.size()) + '\0' + content);
}

/// Content hash of a file, or of a directory tree as SHA-1 over
/// "tree <n>\0" followed by "<relative path>\0<blob id>\n" for every regular
/// file in path order. `exclude` names are skipped at any depth.
inline std::string content_hash(const std::filesystem::path& p, const std::vector<std::string>& exclude = {}) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(p)) return blob_hash(read_file(p));
  if (!fs::is_directory(p)) throw DataError("cannot hash missing path " + p.string());
  std::vector<std::string> files;
  for (auto it = fs::recursive_directory_iterator(p); it != fs::recursive_directory_iterator(); ++it) {
    const auto name = it->path().filename().string();
    if (std::find(exclude.begin(), exclude.end(), name) != exclude.end()) {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file()) files.push_back(fs::relative(it->path(), p).generic_string());
  }
  std::sort(files.begin(), files.end());
  std::string body;
  for (const auto& f : files) body += f + '\0' + blob_hash(read_file(p / f)) + '\n';
  return sha1_hex("tree " + std::to_string(files.size()) + '\0' + body);
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config_paths = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json input_hashes = nlohmann::json::object();
  nlohmann::json effective_config = nlohmann::json::object();
  std::string output_dir;
  std::string started_at = utc_now();
  std::string finished_at;
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"command", m.command},
       {"argv", m.argv},
       {"config_paths", m.config_paths},
       {"seeds", m.seeds},
       {"input_hashes", m.input_hashes},
       {"effective_config", m.effective_config},
       {"output_dir", m.output_dir},
       {"started_at", m.started_at},
       {"finished_at", m.finished_at}};
}

inline void write(const std::filesystem::path& dir, RunManifest m) {
  m.finished_at = utc_now();
  std::ofstream f(dir / "run_manifest.json", std::ios::trunc);
  if (!f) throw DataError("cannot write manifest in " + dir.string());
  f << nlohmann::json(m).dump(2) << '\n';
}

}  // namespace mradnet::manifest
