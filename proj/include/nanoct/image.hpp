#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace nanoct {

/// Row-major 2D image; rows are detector rows (y), columns are detector columns (x).
/// Pixel (x, y) is addressed as img(y, x) and its center sits at coordinate (x, y).
template <typename Scalar>
using ImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image = ImageT<float>;
using Mask = ImageT<std::uint8_t>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct FrameDims {
  int width = 0;
  int height = 0;
};

/// Rectangular sub-region in pixel units, (x0, y0) is the top-left pixel.
struct Roi {
  int x0 = 0;
  int y0 = 0;
  int width = 1;
  int height = 1;

  int x1() const { return x0 + width - 1; }
  int y1() const { return y0 + height - 1; }
  bool contains(double x, double y) const {
    return x >= x0 - 0.5 && x <= x1() + 0.5 && y >= y0 - 0.5 && y <= y1() + 0.5;
  }
  bool inside(FrameDims dims) const {
    return x0 >= 0 && y0 >= 0 && width >= 1 && height >= 1 && x0 + width <= dims.width &&
           y0 + height <= dims.height;
  }
  friend bool operator==(const Roi&, const Roi&) = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Returns true to continue, false to request cancellation.
using ProgressFn = std::function<bool(double)>;

inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n) over a static partition. Each index is
/// computed by exactly one thread, so results never depend on the worker count.
template <typename Body>
void parallel_for(int n, int workers, Body&& body) {
  workers = std::min(resolve_workers(workers), std::max(n, 1));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace nanoct
