#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advgen/common.hpp"
#include "advgen/image.hpp"

namespace testutil {

// Scratch directory removed on scope exit.
struct TmpDir {
  std::filesystem::path path;

  explicit TmpDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("advgen_test_" + tag + "_" + std::to_string(uint64_t(::getpid())));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }

  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline advgen::ImageTensor random_image(int h, int w, uint64_t seed,
                                        advgen::ValueRange range = advgen::ValueRange::unit) {
  advgen::Rng rng(seed);
  advgen::ImageTensor img = advgen::ImageTensor::zeros(h, w, range);
  float lo = range == advgen::ValueRange::unit ? 0.0f : -1.0f;
  for (float& v : img.data) v = rng.uniform_f(lo, 1.0f);
  return img;
}

// Low-frequency sinusoid mixture: smooth enough that bilinear resampling
// round trips stay tight and JPEG stays near-lossless.
inline advgen::ImageTensor smooth_image(int h, int w, uint64_t seed,
                                        advgen::ValueRange range = advgen::ValueRange::unit) {
  advgen::Rng rng(seed);
  advgen::ImageTensor img = advgen::ImageTensor::zeros(h, w, range);
  for (int c = 0; c < 3; ++c) {
    double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5);
    double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
    double amp = rng.uniform(0.1, 0.25);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.5 + amp * std::sin(2.0 * 3.14159265358979 * fx * x / w + px) *
                             std::cos(2.0 * 3.14159265358979 * fy * y / h + py);
        if (range == advgen::ValueRange::symmetric) v = 2.0 * v - 1.0;
        img.at(c, y, x) = float(v);
      }
  }
  img.clamp_to_range();
  return img;
}

inline bool bitwise_equal(const advgen::ImageTensor& a, const advgen::ImageTensor& b) {
  if (a.h != b.h || a.w != b.w || a.range != b.range) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace testutil
