#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nanoct/image.hpp"
#include "nanoct/stack_io.hpp"

namespace nanoct {

enum class Method { Gvb, Cfm, Manual };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct TrackEntry {
  double x = 0.0;  // frame coordinates
  double y = 0.0;
  Method method = Method::Gvb;
  bool hit = false;
  std::optional<double> threshold;
};

/// One entry per frame.
struct RefTrack {
  std::vector<TrackEntry> entries;
  int size() const { return static_cast<int>(entries.size()); }
};

inline constexpr int kThresholdMaxIterations = 64;
inline constexpr double kThresholdTolerance = 0.5;

/// Two-means iterative threshold. Starts from the global mean and iterates
/// T' = (mean{v <= T} + mean{v > T}) / 2 until |T' - T| < 0.5 or 64 rounds.
/// A single-valued input returns that value.
double iterative_threshold(std::span<const float> values);

template <typename Derived>
double iterative_threshold(const Eigen::DenseBase<Derived>& image) {
  const Image copy = image.derived().template cast<float>();
  return iterative_threshold(std::span<const float>(copy.data(), static_cast<std::size_t>(copy.size())));
}

struct GvbResult {
  double x = 0.0;
  double y = 0.0;
  double threshold = 0.0;
};

/// Threshold with optional refinement: every extra pass re-thresholds the
/// pixels at or below the current threshold.
template <typename Derived>
double refined_threshold(const Eigen::DenseBase<Derived>& image, int passes) {
  std::vector<float> values(image.size());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c) values[i++] = static_cast<float>(image(r, c));
  double t = iterative_threshold(values);
  for (int p = 1; p < passes; ++p) {
    std::erase_if(values, [t](float v) { return v > t; });
    t = iterative_threshold(values);
  }
  return t;
}

/// Gray-value barycenter in sub-image coordinates (x = column, y = row).
/// Pixels at or below the threshold weigh depth_max - A, others weigh 0.
/// If every weight vanishes (all candidates at full scale) the plain
/// centroid of the candidates is returned.
template <typename Derived>
GvbResult gvb_center(const Eigen::DenseBase<Derived>& image, double depth_max,
                     std::optional<double> threshold = std::nullopt, int threshold_passes = 1) {
  if (image.size() == 0) throw Error("gvb_center on empty image");
  const double t = threshold ? *threshold : refined_threshold(image, std::max(1, threshold_passes));
  double sw = 0.0, sx = 0.0, sy = 0.0;
  double n = 0.0, cx = 0.0, cy = 0.0;
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double a = static_cast<double>(image(r, c));
      if (a > t) continue;
      const double w = depth_max - a;
      sw += w;
      sx += w * c;
      sy += w * r;
      n += 1.0;
      cx += c;
      cy += r;
    }
  }
  if (n == 0.0) throw Error("no pixel at or below threshold");
  if (sw > 0.0) return {sx / sw, sy / sw, t};
  return {cx / n, cy / n, t};
}

struct CfmOptions {
  double r_min = 3.0;
  double r_max = 12.0;
  /// Fraction of the full-circle score below which the detection is a miss.
  double score_floor = 0.6;
};

struct CfmResult {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  /// Fraction of the circle's edge directions that support the peak, in [0, 1].
  double score = 0.0;
};

/// Circle fit on a dark disk: Sobel edge map, gradient-directed circular Hough
/// voting over [r_min, r_max], peak refined by a 3x3 accumulator centroid.
/// Returns nullopt when the peak's support falls under the score floor.
std::optional<CfmResult> cfm_center(const Image& image, const CfmOptions& opts = {});

struct DetectOptions {
  int threshold_passes = 1;
  CfmOptions cfm;
  int workers = 0;
};

RefTrack track_reference(const ProjectionStack& stack, const Roi& roi, Method method,
                         const DetectOptions& opts = {});

/// CSV columns: frame_index,x,y,method,hit,threshold
std::string track_to_csv(const RefTrack& track);
RefTrack track_from_csv(const std::string& text);

}  // namespace nanoct
