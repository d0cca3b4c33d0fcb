#include "nanoct/aligner.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "json.hpp"

namespace nanoct {

using nlohmann::json;

namespace {

constexpr double kEps = 1e-9;

bool is_integer(double v) { return v == std::round(v); }

}  // namespace

std::string to_string(AlignMode m) { return m == AlignMode::Axis ? "axis" : "cosine"; }

AlignMode align_mode_from_string(const std::string& s) {
  if (s == "axis" || s == "AXIS") return AlignMode::Axis;
  if (s == "cosine" || s == "COSINE") return AlignMode::Cosine;
  throw Error("unknown alignment mode '" + s + "' (expected axis|cosine)");
}

ShiftFill shift_fill_from_string(const std::string& s) {
  if (s.empty() || s == "border" || s == "auto") return ShiftFill::border_mode();
  if (s == "edge") return ShiftFill::edge();
  try {
    std::size_t used = 0;
    const float v = std::stof(s, &used);
    if (used == s.size() && std::isfinite(v)) return ShiftFill::constant(v);
  } catch (const std::exception&) {
  }
  throw Error("unknown fill '" + s + "' (expected border|edge|<number>)");
}

std::vector<double> horizontal_targets(AlignMode mode, double axis_x, double r_signed, int n_frames) {
  if (n_frames < 2) throw Error("at least two frames are required for alignment targets");
  std::vector<double> t(n_frames, axis_x);
  if (mode == AlignMode::Cosine) {
    for (int k = 0; k < n_frames; ++k)
      t[k] = axis_x - r_signed * std::cos(k * std::numbers::pi / (n_frames - 1));
    // k * pi / (n - 1) need not round to pi at the last frame.
    t.front() = axis_x - r_signed;
    t.back() = axis_x + r_signed;
  }
  return t;
}

double estimate_r(const RefTrack& track, double axis_x) {
  if (track.entries.empty()) throw Error("empty track");
  const TrackEntry& first = track.entries.front();
  if (!first.hit || !std::isfinite(first.x))
    throw Error("first frame has no reference point; correct it manually before building a plan");
  return axis_x - first.x;
}

AlignmentPlan build_plan(const RefTrack& track, FrameDims dims, AlignMode mode) {
  const int n = track.size();
  AlignmentPlan plan;
  plan.mode = mode;
  plan.axis_x = symmetry_axis(dims.width);
  plan.r_signed = estimate_r(track, plan.axis_x);
  plan.target_y = track.entries.front().y;
  plan.targets_x = horizontal_targets(mode, plan.axis_x, plan.r_signed, n);
  plan.shifts.resize(n);
  for (int k = 0; k < n; ++k) {
    const TrackEntry& e = track.entries[k];
    FrameShift& s = plan.shifts[k];
    s.manual = e.method == Method::Manual;
    if (!e.hit || !std::isfinite(e.x) || !std::isfinite(e.y)) {
      s.flagged = true;
      continue;
    }
    s.dx = plan.targets_x[k] - e.x;
    s.dy = plan.target_y - e.y;
  }
  plan.crop = crop_common(plan, dims);
  return plan;
}

float border_mode(const Image& image) {
  std::map<long, long> counts;
  const auto h = image.rows(), w = image.cols();
  const auto add = [&](float v) { ++counts[std::lround(v)]; };
  for (Eigen::Index x = 0; x < w; ++x) {
    add(image(0, x));
    if (h > 1) add(image(h - 1, x));
  }
  for (Eigen::Index y = 1; y + 1 < h; ++y) {
    add(image(y, 0));
    if (w > 1) add(image(y, w - 1));
  }
  long best = 0, best_count = -1;
  for (const auto& [v, c] : counts)
    if (c > best_count) {
      best = v;
      best_count = c;
    }
  return static_cast<float>(best);
}

Image apply_shift(const Image& image, double dx, double dy, const ShiftFill& fill) {
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  if (!(std::abs(dx) < w) || !(std::abs(dy) < h))
    throw Error("shift (" + std::to_string(dx) + ", " + std::to_string(dy) + ") exceeds frame size");
  if (dx == 0.0 && dy == 0.0) return image;

  const bool edge = fill.policy == ShiftFill::Policy::EdgeReplicate;
  const float constant = edge ? 0.0f : (fill.value ? *fill.value : border_mode(image));
  Image out(h, w);

  if (is_integer(dx) && is_integer(dy)) {
    const int ix = static_cast<int>(dx), iy = static_cast<int>(dy);
    for (int y = 0; y < h; ++y) {
      const int sy = y - iy;
      for (int x = 0; x < w; ++x) {
        const int sx = x - ix;
        if (sx >= 0 && sx < w && sy >= 0 && sy < h)
          out(y, x) = image(sy, sx);
        else if (edge)
          out(y, x) = image(std::clamp(sy, 0, h - 1), std::clamp(sx, 0, w - 1));
        else
          out(y, x) = constant;
      }
    }
    return out;
  }

  for (int y = 0; y < h; ++y) {
    const double sy_raw = y - dy;
    const bool y_in = sy_raw >= -kEps && sy_raw <= h - 1 + kEps;
    const double sy = std::clamp(sy_raw, 0.0, h - 1.0);
    for (int x = 0; x < w; ++x) {
      const double sx_raw = x - dx;
      const bool x_in = sx_raw >= -kEps && sx_raw <= w - 1 + kEps;
      if (!(x_in && y_in) && !edge) {
        out(y, x) = constant;
        continue;
      }
      const double sx = std::clamp(sx_raw, 0.0, w - 1.0);
      const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 1);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * image(y0, x0) + fx * image(y0, x1)) +
                       fy * ((1 - fx) * image(y1, x0) + fx * image(y1, x1));
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

ProjectionStack apply_plan(const ProjectionStack& stack, const AlignmentPlan& plan,
                           const ShiftFill& fill, int workers) {
  if (plan.size() != stack.size())
    throw Error("plan has " + std::to_string(plan.size()) + " frames, stack has " +
                std::to_string(stack.size()));
  ProjectionStack out = stack;
  parallel_for(stack.size(), workers, [&](int k) {
    const FrameShift& s = plan.shifts[k];
    out.frames[k] = apply_shift(stack.frames[k], s.dx, s.dy, fill);
  });
  return out;
}

AlignmentPlan nudge(const AlignmentPlan& plan, int frame_index, double ddx, double ddy) {
  if (frame_index < 0 || frame_index >= plan.size())
    throw Error("frame index " + std::to_string(frame_index) + " out of range");
  AlignmentPlan out = plan;
  FrameShift& s = out.shifts[frame_index];
  s.dx += ddx;
  s.dy += ddy;
  s.flagged = false;
  s.manual = true;
  return out;
}

Roi crop_common(const AlignmentPlan& plan, FrameDims dims) {
  double left = 0, right = dims.width - 1, top = 0, bottom = dims.height - 1;
  for (const FrameShift& s : plan.shifts) {
    left = std::max(left, std::ceil(s.dx - kEps));
    right = std::min(right, std::floor(dims.width - 1 + s.dx + kEps));
    top = std::max(top, std::ceil(s.dy - kEps));
    bottom = std::min(bottom, std::floor(dims.height - 1 + s.dy + kEps));
  }
  const double half = std::min(plan.axis_x - left, right - plan.axis_x);
  if (half < 0 || bottom < top) throw Error("shifts leave no common valid region");
  int x0 = static_cast<int>(std::ceil(plan.axis_x - half - kEps));
  int x1 = static_cast<int>(std::floor(plan.axis_x + half + kEps));
  if ((x1 - x0 + 1) % 2 != 0) --x1;
  if (x1 < x0 + 1) throw Error("shifts leave no common valid region");
  return {x0, static_cast<int>(top), x1 - x0 + 1, static_cast<int>(bottom - top) + 1};
}

ProjectionStack crop_stack(const ProjectionStack& stack, const Roi& roi) {
  if (!roi.inside(stack.dims())) throw Error("crop rectangle outside frame bounds");
  ProjectionStack out;
  out.angles = stack.angles;
  out.bit_depth = stack.bit_depth;
  out.provenance = stack.provenance;
  out.frames.reserve(stack.size());
  for (const Image& f : stack.frames)
    out.frames.emplace_back(f.block(roi.y0, roi.x0, roi.height, roi.width));
  return out;
}

std::string plan_to_json(const AlignmentPlan& plan) {
  json shifts = json::array();
  for (const auto& s : plan.shifts)
    shifts.push_back({{"dx", s.dx}, {"dy", s.dy}, {"flagged", s.flagged}, {"manual", s.manual}});
  json doc{{"mode", to_string(plan.mode)},
           {"axis_x", plan.axis_x},
           {"R_signed", plan.r_signed},
           {"target_y", plan.target_y},
           {"targets_x", plan.targets_x},
           {"shifts", shifts},
           {"crop",
            {{"x0", plan.crop.x0}, {"y0", plan.crop.y0}, {"width", plan.crop.width},
             {"height", plan.crop.height}}}};
  return doc.dump(2);
}

AlignmentPlan plan_from_json(const std::string& text) {
  AlignmentPlan plan;
  try {
    const json doc = json::parse(text);
    plan.mode = align_mode_from_string(doc.at("mode").get<std::string>());
    plan.axis_x = doc.at("axis_x").get<double>();
    plan.r_signed = doc.at("R_signed").get<double>();
    plan.target_y = doc.at("target_y").get<double>();
    for (const auto& s : doc.at("shifts"))
      plan.shifts.push_back({s.at("dx").get<double>(), s.at("dy").get<double>(),
                             s.value("flagged", false), s.value("manual", false)});
    if (doc.contains("targets_x"))
      plan.targets_x = doc.at("targets_x").get<std::vector<double>>();
    else
      plan.targets_x = horizontal_targets(plan.mode, plan.axis_x, plan.r_signed, plan.size());
    const auto& c = doc.at("crop");
    plan.crop = {c.at("x0").get<int>(), c.at("y0").get<int>(), c.at("width").get<int>(),
                 c.at("height").get<int>()};
  } catch (const json::exception& e) {
    throw Error("malformed plan JSON: " + std::string(e.what()));
  }
  if (plan.targets_x.size() != plan.shifts.size()) throw Error("plan targets/shifts length mismatch");
  return plan;
}

}  // namespace nanoct
