#include "nanoct/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace nanoct {

using nlohmann::json;

namespace {

class StageClock {
 public:
  StageClock(std::string name, PipelineResult& result, std::ostream& log)
      : name_(std::move(name)), result_(result), log_(log), start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    result_.timings.push_back({name_, s});
    log_ << "  " << std::left << std::setw(12) << name_ << std::fixed << std::setprecision(3) << s
         << " s\n";
  }

 private:
  std::string name_;
  PipelineResult& result_;
  std::ostream& log_;
  std::chrono::steady_clock::time_point start_;
};

template <typename Fn>
auto stage(const char* name, PipelineResult& result, std::ostream& log, Fn&& fn) {
  StageClock clock(name, result, log);
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

struct Sink {
  bool enabled = false;
  fs::path dir;
};

PipelineResult run(const ProjectionStack& stack, const PipelineConfig& cfg, std::ostream& log,
                   const Sink& sink, PipelineResult res = {}) {
  const auto emit = [&](const fs::path& name, const std::string& text) {
    if (!sink.enabled) return;
    write_text(sink.dir / name, text);
    res.written.push_back(sink.dir / name);
  };

  if (cfg.roi) {
    res.roi = stage("ROI", res, log, [&] {
      if (!cfg.roi->inside(stack.dims())) throw Error("ROI outside frame bounds");
      return *cfg.roi;
    });
  } else {
    const TrailMap trail = stage("TRAIL", res, log, [&] {
      return trail_product(stack, cfg.trail_delta, cfg.workers);
    });
    res.roi = stage("ROI", res, log, [&] { return suggest_roi(trail, cfg.roi_margin); });
    if (sink.enabled) {
      save_gray_image(trail_image(trail), sink.dir / "trail.pgm", 8, false);
      res.written.push_back(sink.dir / "trail.pgm");
    }
  }
  emit("roi.json", json{{"x0", res.roi.x0}, {"y0", res.roi.y0}, {"width", res.roi.width},
                        {"height", res.roi.height}}.dump(2));

  res.track = stage("DETECT", res, log, [&] {
    RefTrack t;
    if (cfg.track_file) {
      t = track_from_csv(read_text(*cfg.track_file));
    } else {
      DetectOptions opts = cfg.detect;
      if (opts.workers == 0) opts.workers = cfg.workers;
      t = track_reference(stack, res.roi, cfg.method, opts);
    }
    if (t.size() != stack.size()) throw Error("track length does not match frame count");
    int hits = 0;
    for (const auto& e : t.entries) hits += e.hit ? 1 : 0;
    if (hits == 0) throw Error("no reference point found in any frame");
    return t;
  });
  emit("track.csv", track_to_csv(res.track));

  ProjectionStack prepared;
  const ProjectionStack* input = &stack;
  if (cfg.align) {
    res.plan = stage("PLAN", res, log, [&] {
      if (cfg.plan_file) {
        AlignmentPlan p = plan_from_json(read_text(*cfg.plan_file));
        if (p.size() != stack.size()) throw Error("plan length does not match frame count");
        return p;
      }
      return build_plan(res.track, stack.dims(), cfg.mode);
    });
    emit("plan.json", plan_to_json(*res.plan));
    prepared = stage("APPLY", res, log, [&] { return apply_plan(stack, *res.plan, cfg.fill, cfg.workers); });
    prepared = stage("CROP", res, log, [&] { return crop_stack(prepared, res.plan->crop); });
    input = &prepared;
  }

  if (cfg.reconstruct) {
    res.volume = stage("RECONSTRUCT", res, log, [&] {
      ReconParams p = cfg.recon;
      if (p.workers == 0) p.workers = cfg.workers;
      return reconstruct_rows(*input, p);
    });
    if (sink.enabled) {
      stage("WRITE", res, log, [&] {
        save_volume(res.volume, sink.dir / "volume");
        res.written.push_back(sink.dir / "volume.f32");
        res.written.push_back(sink.dir / "volume.json");
        const OrthoViews v =
            ortho_slices(res.volume, res.volume.nx / 2, res.volume.ny / 2, res.volume.nz / 2);
        save_gray_image(v.axial, sink.dir / "preview_axial.pgm", 8, true);
        save_gray_image(v.coronal, sink.dir / "preview_coronal.pgm", 8, true);
        save_gray_image(v.sagittal, sink.dir / "preview_sagittal.pgm", 8, true);
        for (const char* n : {"preview_axial.pgm", "preview_coronal.pgm", "preview_sagittal.pgm"})
          res.written.push_back(sink.dir / n);
        return 0;
      });
    }
  }

  if (sink.enabled) {
    json timings = json::array();
    for (const auto& t : res.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    json summary{{"timings", timings}, {"config", json::parse(pipeline_config_to_json(cfg))}};
    if (!res.volume.empty()) summary["volume"] = {res.volume.nx, res.volume.ny, res.volume.nz};
    emit("summary.json", summary.dump(2));
  }
  return res;
}

std::string roi_string(const Roi& r) {
  return std::to_string(r.x0) + "," + std::to_string(r.y0) + "," + std::to_string(r.width) + "," +
         std::to_string(r.height);
}

}  // namespace

PipelineConfig pipeline_config_from_json(const std::string& text) {
  PipelineConfig c;
  try {
    const json d = json::parse(text);
    if (d.contains("manifest")) c.manifest = d["manifest"].get<std::string>();
    if (d.contains("out")) c.out_dir = d["out"].get<std::string>();
    c.trail_delta = d.value("trail_delta", c.trail_delta);
    c.roi_margin = d.value("roi_margin", c.roi_margin);
    if (d.contains("roi")) {
      const auto& r = d["roi"];
      c.roi = Roi{r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("width").get<int>(),
                  r.at("height").get<int>()};
    }
    if (d.contains("method")) c.method = method_from_string(d["method"].get<std::string>());
    c.detect.threshold_passes = d.value("threshold_passes", c.detect.threshold_passes);
    c.detect.cfm.r_min = d.value("r_min", c.detect.cfm.r_min);
    c.detect.cfm.r_max = d.value("r_max", c.detect.cfm.r_max);
    c.detect.cfm.score_floor = d.value("score_floor", c.detect.cfm.score_floor);
    if (d.contains("track")) c.track_file = d["track"].get<std::string>();
    c.align = d.value("align", c.align);
    if (d.contains("mode")) c.mode = align_mode_from_string(d["mode"].get<std::string>());
    if (d.contains("fill")) c.fill = shift_fill_from_string(d["fill"].get<std::string>());
    if (d.contains("plan")) c.plan_file = d["plan"].get<std::string>();
    c.reconstruct = d.value("reconstruct", c.reconstruct);
    if (d.contains("filter")) c.recon.filter = filter_from_string(d["filter"].get<std::string>());
    if (d.contains("interp")) c.recon.interpolation = interpolation_from_string(d["interp"].get<std::string>());
    if (d.contains("angle_start")) c.recon.angle_start = d["angle_start"].get<double>();
    if (d.contains("angle_stop")) c.recon.angle_stop = d["angle_stop"].get<double>();
    if (d.contains("output_size")) c.recon.output_size = d["output_size"].get<int>();
    if (d.contains("rows")) {
      const auto& r = d["rows"];
      c.recon.row_range = std::make_pair(r.at(0).get<int>(), r.at(1).get<int>());
    }
    c.recon.attenuation = d.value("attenuation", c.recon.attenuation);
    c.dry_run = d.value("dry_run", c.dry_run);
    c.workers = d.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw Error("malformed pipeline config: " + std::string(e.what()));
  }
  return c;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json d{{"manifest", c.manifest.string()},
         {"out", c.out_dir.string()},
         {"trail_delta", c.trail_delta},
         {"roi_margin", c.roi_margin},
         {"method", to_string(c.method)},
         {"threshold_passes", c.detect.threshold_passes},
         {"r_min", c.detect.cfm.r_min},
         {"r_max", c.detect.cfm.r_max},
         {"score_floor", c.detect.cfm.score_floor},
         {"align", c.align},
         {"mode", to_string(c.mode)},
         {"reconstruct", c.reconstruct},
         {"filter", to_string(c.recon.filter)},
         {"interp", to_string(c.recon.interpolation)},
         {"attenuation", c.recon.attenuation},
         {"workers", c.workers}};
  if (c.roi) d["roi"] = {{"x0", c.roi->x0}, {"y0", c.roi->y0}, {"width", c.roi->width}, {"height", c.roi->height}};
  if (c.track_file) d["track"] = c.track_file->string();
  if (c.plan_file) d["plan"] = c.plan_file->string();
  if (c.recon.angle_start) d["angle_start"] = *c.recon.angle_start;
  if (c.recon.angle_stop) d["angle_stop"] = *c.recon.angle_stop;
  if (c.recon.output_size) d["output_size"] = *c.recon.output_size;
  if (c.recon.row_range) d["rows"] = {c.recon.row_range->first, c.recon.row_range->second};
  if (c.fill.policy == ShiftFill::Policy::EdgeReplicate)
    d["fill"] = "edge";
  else if (c.fill.value)
    d["fill"] = std::to_string(*c.fill.value);
  else
    d["fill"] = "border";
  return d.dump(2);
}

std::string describe(const PipelineConfig& c) {
  std::ostringstream os;
  os << "manifest     " << c.manifest.string() << '\n';
  if (c.roi)
    os << "ROI          fixed " << roi_string(*c.roi) << '\n';
  else
    os << "TRAIL        delta=" << c.trail_delta << '\n'
       << "ROI          suggested, margin=" << c.roi_margin << '\n';
  if (c.track_file)
    os << "DETECT       from " << c.track_file->string() << '\n';
  else
    os << "DETECT       method=" << to_string(c.method) << " passes=" << c.detect.threshold_passes
       << (c.method == Method::Cfm ? " r=[" + std::to_string(c.detect.cfm.r_min) + ", " +
                                         std::to_string(c.detect.cfm.r_max) + "]"
                                   : std::string())
       << '\n';
  if (c.align) {
    os << "PLAN         " << (c.plan_file ? "from " + c.plan_file->string() : "mode=" + to_string(c.mode))
       << '\n'
       << "APPLY        fill="
       << (c.fill.policy == ShiftFill::Policy::EdgeReplicate
               ? std::string("edge")
               : (c.fill.value ? std::to_string(*c.fill.value) : std::string("border")))
       << '\n'
       << "CROP         common valid region, symmetric about the axis\n";
  }
  if (c.reconstruct) {
    os << "RECONSTRUCT  filter=" << to_string(c.recon.filter)
       << " interp=" << to_string(c.recon.interpolation);
    if (c.recon.output_size) os << " size=" << *c.recon.output_size;
    if (c.recon.row_range) os << " rows=" << c.recon.row_range->first << ':' << c.recon.row_range->second;
    if (c.recon.angle_start || c.recon.angle_stop)
      os << " angles=" << c.recon.angle_start.value_or(0.0) << ':' << c.recon.angle_stop.value_or(0.0);
    os << '\n';
  }
  os << "out          " << c.out_dir.string() << '\n';
  return os.str();
}

PipelineResult run_pipeline(const ProjectionStack& stack, const PipelineConfig& config,
                            std::ostream& log) {
  return run(stack, config, log, Sink{});
}

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log) {
  if (config.dry_run) {
    log << describe(config);
    return {};
  }
  PipelineResult pre;
  const ProjectionStack stack =
      stage("LOAD", pre, log, [&] { return load_stack(config.manifest, config.workers); });
  fs::create_directories(config.out_dir);
  return run(stack, config, log, Sink{true, config.out_dir}, std::move(pre));
}

}  // namespace nanoct
