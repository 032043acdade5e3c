#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dhfd/time.hpp"

namespace testutil {

inline dhfd::Timestamp ts(const std::string& s) {
  auto t = dhfd::parse_timestamp(s);
  if (!t) throw std::runtime_error("bad test timestamp " + s);
  return *t;
}

inline dhfd::Timestamp day(int d, int h = 0) {
  return ts("2031-01-01T00:00:00") + std::chrono::days(d) + std::chrono::hours(h);
}

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("dhfd_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testutil
