// nanoct: command-line front end for the alignment and reconstruction toolkit.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nanoct/aligner.hpp"
#include "nanoct/fbp_recon.hpp"
#include "nanoct/phantom_lab.hpp"
#include "nanoct/pipeline.hpp"
#include "nanoct/ref_locator.hpp"
#include "nanoct/service.hpp"
#include "nanoct/stack_io.hpp"
#include "nanoct/trail_roi.hpp"

using namespace nanoct;

namespace {

Roi parse_roi(const std::string& s) {
  Roi r;
  char c1, c2, c3;
  std::istringstream in(s);
  if (!(in >> r.x0 >> c1 >> r.y0 >> c2 >> r.width >> c3 >> r.height) || c1 != ',' || c2 != ',' ||
      c3 != ',' || !in.eof())
    throw Error("--roi expects x,y,w,h, got '" + s + "'");
  return r;
}

std::pair<int, int> parse_rows(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw Error("--rows expects a:b, got '" + s + "'");
  try {
    return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error("--rows expects a:b, got '" + s + "'");
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
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

// Flags shared by several subcommands; empty strings mean "not given".
struct Common {
  std::string manifest;
  std::string roi;
  std::string method = "gvb";
  std::string mode = "cosine";
  std::string filter = "ram-lak";
  std::string interp = "linear";
  std::string rows;
  std::string out;
  int workers = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nano-CT projection alignment and filtered backprojection"};
  app.require_subcommand(1);
  Common c;

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Write a synthetic bead dataset and its ground truth");
  BeadSpec spec;
  bool no_sample = false;
  phantom->add_option("--out", c.out, "Output directory")->required();
  phantom->add_option("--seed", spec.seed, "RNG seed")->capture_default_str();
  phantom->add_option("--frames", spec.frames)->capture_default_str();
  phantom->add_option("--size", spec.size, "Frame width and height")->capture_default_str();
  phantom->add_option("--bead-radius", spec.bead_radius)->capture_default_str();
  phantom->add_option("--bead-offset", spec.bead_offset, "Bead distance from the axis (px)")->capture_default_str();
  phantom->add_option("--jitter", spec.jitter_max, "Max per-frame jitter (px)")->capture_default_str();
  phantom->add_flag("--continuous-jitter", spec.continuous_jitter, "Sub-pixel jitter");
  phantom->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  phantom->add_flag("--no-sample", no_sample, "Bead only");

  // trail
  auto* trail = app.add_subcommand("trail", "Minimum-trail image and suggested ROI");
  double delta = 0.0;
  int margin = 10;
  trail->add_option("--manifest", c.manifest)->required();
  trail->add_option("--delta", delta, "Binarization tolerance above the frame minimum")->capture_default_str();
  trail->add_option("--margin", margin, "ROI margin (px)")->capture_default_str();
  trail->add_option("--out", c.out, "Output directory")->required();

  // detect
  auto* detect = app.add_subcommand("detect", "Track the reference point through every frame");
  DetectOptions dopt;
  detect->add_option("--manifest", c.manifest)->required();
  detect->add_option("--roi", c.roi, "x,y,w,h")->required();
  detect->add_option("--method", c.method, "gvb|cfm")->capture_default_str();
  detect->add_option("--passes", dopt.threshold_passes, "Threshold passes (GVB)")->capture_default_str();
  detect->add_option("--r-min", dopt.cfm.r_min)->capture_default_str();
  detect->add_option("--r-max", dopt.cfm.r_max)->capture_default_str();
  detect->add_option("--out", c.out, "Track CSV path")->required();

  // align
  auto* align = app.add_subcommand("align", "Build an alignment plan and write the aligned, cropped stack");
  std::string track_path, fill = "border";
  bool plan_only = false;
  align->add_option("--manifest", c.manifest)->required();
  align->add_option("--track", track_path, "Track CSV from detect")->required();
  align->add_option("--mode", c.mode, "axis|cosine")->capture_default_str();
  align->add_option("--fill", fill, "border|edge|<value>")->capture_default_str();
  align->add_flag("--plan-only", plan_only, "Write plan.json only");
  align->add_option("--out", c.out, "Output directory")->required();

  // reconstruct
  auto* recon = app.add_subcommand("reconstruct", "Filtered backprojection of every detector row");
  std::optional<int> output_size;
  bool no_log = false;
  recon->add_option("--manifest", c.manifest)->required();
  recon->add_option("--filter", c.filter, "ram-lak|shepp-logan|cosine|hamming|hann|none")->capture_default_str();
  recon->add_option("--interp", c.interp, "nearest|linear")->capture_default_str();
  recon->add_option("--rows", c.rows, "Inclusive detector rows a:b");
  recon->add_option("--size", output_size, "Output slice size");
  recon->add_flag("--no-log", no_log, "Backproject intensities without the log transform");
  recon->add_option("--out", c.out, "Output directory")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "trail, ROI, detect, plan, apply, crop, reconstruct");
  std::string config_path;
  bool dry_run = false;
  pipe->add_option("--config", config_path, "Pipeline config JSON; flags override it");
  pipe->add_option("--manifest", c.manifest);
  pipe->add_option("--roi", c.roi, "x,y,w,h (skips the trail step)");
  pipe->add_option("--method", c.method, "gvb|cfm");
  pipe->add_option("--mode", c.mode, "axis|cosine");
  pipe->add_option("--filter", c.filter);
  pipe->add_option("--interp", c.interp);
  pipe->add_option("--rows", c.rows);
  pipe->add_option("--out", c.out);
  pipe->add_flag("--dry-run", dry_run, "Print resolved stages and exit");

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP service for the operator console");
  std::string host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--host", host)->capture_default_str();
  srv->add_option("--port", port)->capture_default_str();

  app.add_option("--workers", c.workers, "Worker threads (0 = hardware)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*phantom) {
      if (no_sample) spec.sample = std::vector<SampleSphere>{};
      const auto [stack, truth] = bead_dataset(spec, c.workers);
      const fs::path manifest = save_stack(stack, c.out);
      write_text(fs::path(c.out) / "ground_truth.json", ground_truth_to_json(truth));
      std::cout << manifest.string() << '\n';
    } else if (*trail) {
      const ProjectionStack stack = load_stack(c.manifest, c.workers);
      const TrailMap t = trail_product(stack, delta, c.workers);
      fs::create_directories(c.out);
      save_gray_image(trail_image(t), fs::path(c.out) / "trail.pgm", 8, false);
      const Roi r = suggest_roi(t, margin);
      std::cout << "roi " << r.x0 << ',' << r.y0 << ',' << r.width << ',' << r.height << '\n';
    } else if (*detect) {
      const ProjectionStack stack = load_stack(c.manifest, c.workers);
      dopt.workers = c.workers;
      const RefTrack track = track_reference(stack, parse_roi(c.roi), method_from_string(c.method), dopt);
      write_text(c.out, track_to_csv(track));
      int hits = 0;
      for (const auto& e : track.entries) hits += e.hit ? 1 : 0;
      std::cout << hits << '/' << track.size() << " frames located\n";
    } else if (*align) {
      const ProjectionStack stack = load_stack(c.manifest, c.workers);
      const RefTrack track = track_from_csv(read_text(track_path));
      if (track.size() != stack.size()) throw Error("track length does not match frame count");
      const AlignmentPlan plan = build_plan(track, stack.dims(), align_mode_from_string(c.mode));
      write_text(fs::path(c.out) / "plan.json", plan_to_json(plan));
      if (!plan_only) {
        const ProjectionStack aligned =
            crop_stack(apply_plan(stack, plan, shift_fill_from_string(fill), c.workers), plan.crop);
        std::cout << save_stack(aligned, fs::path(c.out) / "aligned").string() << '\n';
      }
    } else if (*recon) {
      const ProjectionStack stack = load_stack(c.manifest, c.workers);
      ReconParams p;
      p.filter = filter_from_string(c.filter);
      p.interpolation = interpolation_from_string(c.interp);
      if (!c.rows.empty()) p.row_range = parse_rows(c.rows);
      p.output_size = output_size;
      p.attenuation = !no_log;
      p.workers = c.workers;
      const Volume v = reconstruct_rows(stack, p);
      fs::create_directories(c.out);
      save_volume(v, fs::path(c.out) / "volume");
      std::cout << v.nx << 'x' << v.ny << 'x' << v.nz << '\n';
    } else if (*pipe) {
      PipelineConfig cfg;
      if (!config_path.empty()) cfg = pipeline_config_from_json(read_text(config_path));
      if (pipe->count("--manifest")) cfg.manifest = c.manifest;
      if (pipe->count("--roi")) cfg.roi = parse_roi(c.roi);
      if (pipe->count("--method")) cfg.method = method_from_string(c.method);
      if (pipe->count("--mode")) cfg.mode = align_mode_from_string(c.mode);
      if (pipe->count("--filter")) cfg.recon.filter = filter_from_string(c.filter);
      if (pipe->count("--interp")) cfg.recon.interpolation = interpolation_from_string(c.interp);
      if (pipe->count("--rows")) cfg.recon.row_range = parse_rows(c.rows);
      if (pipe->count("--out")) cfg.out_dir = c.out;
      if (app.count("--workers")) cfg.workers = c.workers;
      cfg.dry_run = cfg.dry_run || dry_run;
      if (cfg.manifest.empty()) throw Error("pipeline needs --manifest or a config with one");
      const PipelineResult r = run_pipeline(cfg, std::cout);
      if (!cfg.dry_run) {
        double total = 0.0;
        for (const auto& t : r.timings) total += t.seconds;
        std::cout << "  total       " << total << " s\n";
        std::cout << "volume " << r.volume.nx << 'x' << r.volume.ny << 'x' << r.volume.nz << " -> "
                  << cfg.out_dir.string() << '\n';
      }
    } else if (*srv) {
      std::cout << "listening on " << host << ':' << port << std::endl;
      serve(host, port, ServiceOptions{c.workers});
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
