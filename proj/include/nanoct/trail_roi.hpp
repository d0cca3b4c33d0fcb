#pragma once

#include "nanoct/image.hpp"
#include "nanoct/stack_io.hpp"

namespace nanoct {

/// Product of per-frame minimum masks. Trail pixels are 0, everything else 1.
struct TrailMap {
  Mask mask;
  Eigen::Index zero_count = 0;
};

/// 0 where value <= min + delta, 1 elsewhere.
template <typename Derived>
Mask binarize_min(const Eigen::DenseBase<Derived>& image, double delta = 0.0) {
  const double cutoff = static_cast<double>(image.minCoeff()) + delta;
  return (image.derived().array().template cast<double>() > cutoff).template cast<std::uint8_t>();
}

TrailMap trail_product(const ProjectionStack& stack, double delta = 0.0, int workers = 0);

/// Tight bounding box of the trail expanded by `margin`, clamped to the frame.
Roi suggest_roi(const TrailMap& trail, int margin);

/// Trail rendered for export: 0 -> black, 1 -> white.
Image trail_image(const TrailMap& trail, float white = 255.0f);

}  // namespace nanoct
