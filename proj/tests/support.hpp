#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "nanoct/image.hpp"
#include "nanoct/phantom_lab.hpp"

namespace nanoct::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nanoct_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Dark disk (value `inside`) on a bright field, area-weighted at the rim.
inline Image disk_image(int w, int h, double cx, double cy, double r, float bright = 220.0f,
                        float inside = 40.0f) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double cover = disk_box_overlap(cx, cy, r, x - 0.5, x + 0.5, y - 0.5, y + 0.5);
      img(y, x) = static_cast<float>(bright + (inside - bright) * cover);
    }
  return img;
}

/// Centered disk of value 1 in an n x n image, exact coverage at the rim.
inline Image centered_disk(int n, double r) {
  const double c = 0.5 * (n - 1);
  Image img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      img(y, x) = static_cast<float>(disk_box_overlap(c, c, r, x - 0.5, x + 0.5, y - 0.5, y + 0.5));
  return img;
}

// Reference resampler: out(x, y) = in(x - dx, y - dy) by explicit four-neighbor
// weighting, or nullopt when the source point leaves [0, w-1] x [0, h-1].
inline std::optional<double> bilinear_oracle(const Image& in, double x, double y) {
  const double w = static_cast<double>(in.cols()), h = static_cast<double>(in.rows());
  if (x < 0 || y < 0 || x > w - 1 || y > h - 1) return std::nullopt;
  double acc = 0.0;
  for (int j = static_cast<int>(std::floor(y)); j <= static_cast<int>(std::floor(y)) + 1; ++j)
    for (int i = static_cast<int>(std::floor(x)); i <= static_cast<int>(std::floor(x)) + 1; ++i) {
      const double wx = 1.0 - std::abs(x - i), wy = 1.0 - std::abs(y - j);
      if (wx <= 0 || wy <= 0) continue;
      acc += wx * wy * in(j, i);
    }
  return acc;
}

inline Image random_image(int w, int h, std::mt19937& rng) {
  std::uniform_real_distribution<float> d(0.0f, 255.0f);
  Image img(h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = d(rng);
  return img;
}

// Band-limited ramp taps, written out from the closed form.
inline double ramp_tap(int n) {
  if (n == 0) return 0.5;
  if (n % 2 == 0) return 0.0;
  return -2.0 / (std::numbers::pi * std::numbers::pi * n * n);
}

}  // namespace nanoct::testing
