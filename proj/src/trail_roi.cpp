#include "nanoct/trail_roi.hpp"

namespace nanoct {

TrailMap trail_product(const ProjectionStack& stack, double delta, int workers) {
  if (stack.size() == 0) throw Error("empty stack");
  std::vector<Mask> masks(stack.size());
  parallel_for(stack.size(), workers,
               [&](int k) { masks[k] = binarize_min(stack.frames[k], delta); });
  TrailMap trail;
  trail.mask = masks.front();
  for (std::size_t k = 1; k < masks.size(); ++k) trail.mask *= masks[k];
  trail.zero_count = (trail.mask == 0).count();
  return trail;
}

Roi suggest_roi(const TrailMap& trail, int margin) {
  if (margin < 0) throw Error("margin must be non-negative");
  const int h = static_cast<int>(trail.mask.rows());
  const int w = static_cast<int>(trail.mask.cols());
  int xmin = w, xmax = -1, ymin = h, ymax = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (trail.mask(y, x) == 0) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
  if (xmax < 0) throw Error("trail map has no zero pixels");
  const int x0 = std::max(0, xmin - margin);
  const int y0 = std::max(0, ymin - margin);
  const int x1 = std::min(w - 1, xmax + margin);
  const int y1 = std::min(h - 1, ymax + margin);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Image trail_image(const TrailMap& trail, float white) {
  return trail.mask.cast<float>() * white;
}

}  // namespace nanoct
