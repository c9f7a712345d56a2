#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "clipcurate/synth.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("clipcurate_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string write_scene(const TempDir& dir, const std::string& name,
                               const clipcurate::synth::Scene& scene) {
  const auto path = dir.file(name);
  std::ofstream out(path, std::ios::binary);
  clipcurate::synth::write_y4m(out, scene);
  return path;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace testsupport
