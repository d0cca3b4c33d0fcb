#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nanoct/image.hpp"
#include "nanoct/stack_io.hpp"

namespace nanoct {

enum class Filter { RamLak, SheppLogan, Cosine, Hamming, Hann, None };
enum class Interpolation { Nearest, Linear };

std::string to_string(Filter f);
std::string to_string(Interpolation i);
Filter filter_from_string(const std::string& s);
Interpolation interpolation_from_string(const std::string& s);

struct ReconParams {
  Filter filter = Filter::RamLak;
  Interpolation interpolation = Interpolation::Linear;
  /// Angular range in degrees; the stack's own angles when unset.
  std::optional<double> angle_start;
  std::optional<double> angle_stop;
  /// default_output_size(width) when unset.
  std::optional<int> output_size;
  /// Inclusive detector-row interval; every row when unset.
  std::optional<std::pair<int, int>> row_range;
  /// Convert intensities to line integrals, -ln(I / full_scale), before filtering.
  bool attenuation = true;
  int workers = 0;
};

/// Detector bins along rows, one column per projection angle.
struct Sinogram {
  Eigen::ArrayXXf data;  // W x N
  std::vector<double> angles;  // degrees

  int width() const { return static_cast<int>(data.rows()); }
  int count() const { return static_cast<int>(data.cols()); }
  double axis() const { return 0.5 * (width() - 1); }
};

/// 2 * floor(W / (2 sqrt 2)): the largest even square inscribed in the
/// detector's field of view (1024 -> 724, 512 -> 362).
int default_output_size(int detector_width);

/// Smallest power of two >= 2 * W.
int padded_length(int detector_width);

/// Band-limited ramp h[0] = 1/4, h[odd n] = -1/(pi n)^2, transformed to the
/// frequency domain (scaled by 2 so the ramp reaches 1 at Nyquist) and
/// multiplied by the chosen window. The DC bin is exactly zero for every
/// ramp filter. NONE returns all ones.
template <typename Scalar = double>
Eigen::Array<Scalar, Eigen::Dynamic, 1> filter_response(int padded_len, Filter filter);

/// Spatial kernel matching filter_response(P, RAM_LAK) for |n| < P / 2, including the factor 2.
double ramp_kernel(int n);

/// One projection zero-padded to padded_length(W) and filtered; all P output
/// samples are returned, of which filter_sinogram keeps the first W.
Eigen::ArrayXd filter_projection(const Eigen::ArrayXd& projection, Filter filter);

Sinogram filter_sinogram(const Sinogram& sino, Filter filter);

/// Pixel-driven backprojection onto an O x O grid centered on the detector axis,
/// scaled by pi / (2 N). Samples falling off the detector contribute 0.
Image backproject(const Sinogram& filtered, Interpolation interp, int output_size);

/// Detector width the forward projector uses for an n x n image: the smallest
/// W >= ceil(n sqrt 2) with default_output_size(W) >= n.
int detector_width_for(int image_size);

/// Line-integral projection of a square image by sampling each ray at half-pixel
/// steps with bilinear interpolation (zero outside the image).
Sinogram forward_project(const Image& image, const std::vector<double>& angles_deg,
                         std::optional<int> detector_width = std::nullopt);

/// One row of every frame, converted per params.attenuation.
Sinogram row_sinogram(const ProjectionStack& stack, int row, const std::vector<double>& angles,
                      bool attenuation);

Volume reconstruct_rows(const ProjectionStack& stack, const ReconParams& params,
                        const ProgressFn& progress = {});

struct OrthoViews {
  Image axial;     // z = iz, ny x nx
  Image coronal;   // y = iy, nz x nx
  Image sagittal;  // x = ix, nz x ny
};

OrthoViews ortho_slices(const Volume& volume, int ix, int iy, int iz);

class Cancelled : public Error {
 public:
  Cancelled() : Error("cancelled") {}
};

}  // namespace nanoct
