#pragma once

#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "deepest/error.hpp"

namespace testing {

// Runs `fn` and returns the library error code it threw, or "" if none.
template <typename Fn>
std::string error_code(Fn&& fn) {
  try {
    fn();
  } catch (const deepest::Error& e) {
    return e.code();
  }
  return "";
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("deepest_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
