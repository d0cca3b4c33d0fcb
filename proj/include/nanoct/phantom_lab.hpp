#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nanoct/image.hpp"
#include "nanoct/ref_locator.hpp"
#include "nanoct/stack_io.hpp"

namespace nanoct {

/// Gold bead transmission: 83.1 % absorption at 12 keV through 0.5 um of gold.
inline constexpr double kGoldTransmission = 1.0 - 0.831;

/// Weakly absorbing sphere in the sample, positioned in reconstruction
/// coordinates (x, y relative to the rotation axis, z = detector row).
struct SampleSphere {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double radius = 10.0;
  double mu = 0.01;  // attenuation per pixel length
};

struct BeadSpec {
  int frames = 161;
  int size = 512;
  double bead_radius = 6.0;
  double bead_offset = 40.0;  // true R
  double bead_transmission = kGoldTransmission;
  int jitter_max = 6;
  bool continuous_jitter = false;
  double noise_sigma = 5.0;
  std::uint64_t seed = 42;
  double angle_start = 0.0;
  double angle_stop = 180.0;
  /// Detector row of the bead; 0.3 * size when unset.
  std::optional<double> bead_row;
  /// Default sample (see default_sample) when unset; empty vector for none.
  std::optional<std::vector<SampleSphere>> sample;
};

struct GroundTruth {
  std::vector<Point2> true_shifts;
  std::vector<Point2> true_centers;
  double true_r = 0.0;
  double axis_x = 0.0;
  double bead_row = 0.0;
  std::optional<Volume> phantom_volume;
};

/// A few spheres below the bead's row, sized relative to the frame.
std::vector<SampleSphere> default_sample(int size, double bead_row);

/// Area of the disk (cx, cy, r) inside the axis-aligned box [x0, x1] x [y0, y1], exact.
double disk_box_overlap(double cx, double cy, double r, double x0, double x1, double y0, double y1);

/// Throws unless the bead stays inside the frame for every angle and jitter.
void validate(const BeadSpec& spec);

std::pair<ProjectionStack, GroundTruth> bead_dataset(const BeadSpec& spec, int workers = 0);

/// Modified (high-contrast) Shepp-Logan head phantom with intensities in [0, 1].
Image shepp_logan(int size);

struct TrackScore {
  double mean_abs_err = 0.0;
  double max_abs_err = 0.0;
  int missed = 0;
};

TrackScore score_track(const RefTrack& track, const GroundTruth& truth);

template <typename A, typename B>
double rmse(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("rmse: shape mismatch");
  if (a.size() == 0) return 0.0;
  const auto diff = a.derived().template cast<double>().array() - b.derived().template cast<double>().array();
  return std::sqrt(diff.square().sum() / static_cast<double>(a.size()));
}

double rmse(const Volume& a, const Volume& b);

std::string ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const std::string& text);

}  // namespace nanoct
