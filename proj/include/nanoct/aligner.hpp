#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nanoct/image.hpp"
#include "nanoct/ref_locator.hpp"
#include "nanoct/stack_io.hpp"

namespace nanoct {

enum class AlignMode { Axis, Cosine };

std::string to_string(AlignMode m);
AlignMode align_mode_from_string(const std::string& s);

/// What fills pixels exposed by a shift. A constant without a value means
/// "the most frequent border value of that frame".
struct ShiftFill {
  enum class Policy { Constant, EdgeReplicate };
  Policy policy = Policy::Constant;
  std::optional<float> value;

  static ShiftFill constant(float v) { return {Policy::Constant, v}; }
  static ShiftFill border_mode() { return {Policy::Constant, std::nullopt}; }
  static ShiftFill edge() { return {Policy::EdgeReplicate, std::nullopt}; }
};

ShiftFill shift_fill_from_string(const std::string& s);

struct FrameShift {
  double dx = 0.0;
  double dy = 0.0;
  bool flagged = false;  // detector missed this frame
  bool manual = false;   // adjusted by hand
};

struct AlignmentPlan {
  std::vector<FrameShift> shifts;
  AlignMode mode = AlignMode::Cosine;
  std::vector<double> targets_x;
  double target_y = 0.0;
  double axis_x = 0.0;
  double r_signed = 0.0;
  Roi crop;

  int size() const { return static_cast<int>(shifts.size()); }
};

/// Column of the rotation axis for a frame of the given width.
inline double symmetry_axis(int width) { return 0.5 * (width - 1); }

/// AXIS: every target is axis_x. COSINE: axis_x - R cos((k-1) pi / (n-1)),
/// so the first frame sits at axis_x - R and the last at axis_x + R.
std::vector<double> horizontal_targets(AlignMode mode, double axis_x, double r_signed, int n_frames);

/// Signed bead offset from the axis in the first frame: axis_x - x_1.
double estimate_r(const RefTrack& track, double axis_x);

/// Shifts that bring the tracked point onto the targets; the vertical target
/// is the first frame's row. Missed frames get a zero, flagged shift.
AlignmentPlan build_plan(const RefTrack& track, FrameDims dims, AlignMode mode);

/// Destination-convention shift: out(x, y) = in(x - dx, y - dy). Integer shifts
/// copy pixels exactly, fractional shifts resample bilinearly.
Image apply_shift(const Image& image, double dx, double dy, const ShiftFill& fill = {});

ProjectionStack apply_plan(const ProjectionStack& stack, const AlignmentPlan& plan,
                           const ShiftFill& fill = {}, int workers = 0);

AlignmentPlan nudge(const AlignmentPlan& plan, int frame_index, double ddx, double ddy);

/// Largest rectangle never touched by fill in any shifted frame, trimmed to be
/// symmetric about axis_x with an even width.
Roi crop_common(const AlignmentPlan& plan, FrameDims dims);

ProjectionStack crop_stack(const ProjectionStack& stack, const Roi& roi);

std::string plan_to_json(const AlignmentPlan& plan);
AlignmentPlan plan_from_json(const std::string& text);

/// Most frequent value (rounded to integer) on the frame's outer border.
float border_mode(const Image& image);

}  // namespace nanoct
