#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ga2c/common.hpp"

namespace ga2c {

// Write-temp-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

}  // namespace ga2c
