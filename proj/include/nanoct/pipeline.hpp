#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nanoct/aligner.hpp"
#include "nanoct/fbp_recon.hpp"
#include "nanoct/ref_locator.hpp"
#include "nanoct/stack_io.hpp"
#include "nanoct/trail_roi.hpp"

namespace nanoct {

/// Error raised by one pipeline stage; `stage()` names it (LOAD, TRAIL, DETECT, ...).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  fs::path manifest;
  fs::path out_dir = "out";

  // trail / ROI
  double trail_delta = 0.0;
  int roi_margin = 10;
  std::optional<Roi> roi;

  // detection
  Method method = Method::Gvb;
  DetectOptions detect;
  std::optional<fs::path> track_file;

  // alignment
  bool align = true;
  AlignMode mode = AlignMode::Cosine;
  ShiftFill fill;
  std::optional<fs::path> plan_file;

  // reconstruction
  bool reconstruct = true;
  ReconParams recon;

  bool dry_run = false;
  int workers = 0;
};

PipelineConfig pipeline_config_from_json(const std::string& text);
std::string pipeline_config_to_json(const PipelineConfig& config);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  std::vector<StageTiming> timings;
  Roi roi;
  RefTrack track;
  std::optional<AlignmentPlan> plan;
  Volume volume;
  std::vector<fs::path> written;
};

/// Resolved stages and parameters, one per line; what --dry-run prints.
std::string describe(const PipelineConfig& config);

/// trail -> ROI -> detect -> plan -> apply -> crop -> reconstruct, writing
/// artifacts under config.out_dir. Stage failures surface as StageError.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log);

/// Same stages on an in-memory stack; writes nothing.
PipelineResult run_pipeline(const ProjectionStack& stack, const PipelineConfig& config,
                            std::ostream& log);

}  // namespace nanoct
