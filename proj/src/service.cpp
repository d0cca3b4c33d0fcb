#include "nanoct/service.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "nanoct/aligner.hpp"
#include "nanoct/fbp_recon.hpp"
#include "nanoct/phantom_lab.hpp"
#include "nanoct/png.hpp"
#include "nanoct/ref_locator.hpp"
#include "nanoct/stack_io.hpp"
#include "nanoct/trail_roi.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen's headers.
#include "httplib.h"
#include "json.hpp"

namespace nanoct {

using nlohmann::json;

namespace {

enum class Stage { Loaded, RoiSet, Tracked, Aligned, Reconstructed };

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Loaded: return "LOADED";
    case Stage::RoiSet: return "ROI_SET";
    case Stage::Tracked: return "TRACKED";
    case Stage::Aligned: return "ALIGNED";
    case Stage::Reconstructed: return "RECONSTRUCTED";
  }
  return "?";
}

enum class JobKind { Detect, Align, Reconstruct };
enum class JobState { Running, Done, Failed, Cancelled };

const char* to_string(JobKind k) {
  switch (k) {
    case JobKind::Detect: return "DETECT";
    case JobKind::Align: return "ALIGN";
    case JobKind::Reconstruct: return "RECONSTRUCT";
  }
  return "?";
}

const char* to_string(JobState s) {
  switch (s) {
    case JobState::Running: return "RUNNING";
    case JobState::Done: return "DONE";
    case JobState::Failed: return "FAILED";
    case JobState::Cancelled: return "CANCELLED";
  }
  return "?";
}

/// Client-facing failure with an HTTP status.
struct HttpError : Error {
  int status;
  HttpError(int s, const std::string& what) : Error(what), status(s) {}
};

struct Session {
  std::string id;
  std::mutex mutex;
  std::shared_ptr<const ProjectionStack> stack;
  std::shared_ptr<const TrailMap> trail;
  std::optional<Roi> roi;
  std::shared_ptr<const RefTrack> track;
  std::shared_ptr<const AlignmentPlan> plan;
  ShiftFill fill;
  std::shared_ptr<const Volume> volume;
  std::uint64_t revision = 0;
  std::string job_id;

  Stage stage() const {
    if (volume) return Stage::Reconstructed;
    if (plan) return Stage::Aligned;
    if (track) return Stage::Tracked;
    if (roi) return Stage::RoiSet;
    return Stage::Loaded;
  }
};

struct Job {
  std::string id;
  std::string session_id;
  JobKind kind = JobKind::Detect;
  std::atomic<double> progress{0.0};
  std::atomic<JobState> state{JobState::Running};
  std::atomic<bool> cancel{false};
  std::mutex mutex;
  std::string error;
  std::thread thread;

  void advance(double p) {
    double cur = progress.load();
    while (p > cur && !progress.compare_exchange_weak(cur, p)) {
    }
  }
};

json roi_json(const Roi& r) {
  return {{"x0", r.x0}, {"y0", r.y0}, {"width", r.width}, {"height", r.height}};
}

json track_json(const RefTrack& t) {
  json rows = json::array();
  for (int k = 0; k < t.size(); ++k) {
    const auto& e = t.entries[k];
    json row{{"frame_index", k}, {"method", to_string(e.method)}, {"hit", e.hit}};
    row["x"] = std::isfinite(e.x) ? json(e.x) : json(nullptr);
    row["y"] = std::isfinite(e.y) ? json(e.y) : json(nullptr);
    row["threshold"] = e.threshold ? json(*e.threshold) : json(nullptr);
    rows.push_back(row);
  }
  return rows;
}

json job_json(Job& j) {
  json d{{"id", j.id},
         {"session", j.session_id},
         {"kind", to_string(j.kind)},
         {"progress", j.progress.load()},
         {"state", to_string(j.state.load())}};
  std::lock_guard lock(j.mutex);
  d["error"] = j.error.empty() ? json(nullptr) : json(j.error);
  return d;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError(400, std::string("invalid JSON body: ") + e.what());
  }
  if (body.is_null()) return json::object();
  if (!body.is_object()) throw HttpError(400, "JSON body must be an object");
  return body;
}

void draw_circle(RgbImage& img, double cx, double cy, double r, std::uint8_t v) {
  const int steps = std::max(32, static_cast<int>(8 * r));
  for (int i = 0; i < steps; ++i) {
    const double a = 2.0 * std::numbers::pi * i / steps;
    img.set(static_cast<int>(std::lround(cx + r * std::cos(a))),
            static_cast<int>(std::lround(cy + r * std::sin(a))), v, v, v);
  }
}

void draw_rect(RgbImage& img, const Roi& r) {
  constexpr std::uint8_t R = 139, G = 69, B = 19;  // brown
  for (int x = r.x0; x <= r.x1(); ++x) {
    img.set(x, r.y0, R, G, B);
    img.set(x, r.y1(), R, G, B);
  }
  for (int y = r.y0; y <= r.y1(); ++y) {
    img.set(r.x0, y, R, G, B);
    img.set(r.x1(), y, R, G, B);
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  std::mutex registry;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::mt19937_64 rng{std::random_device{}()};

  std::string token() {
    std::lock_guard lock(registry);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string t(16, '0');
    auto v = rng();
    for (auto& c : t) {
      c = kHex[v & 0xf];
      v >>= 4;
    }
    return t;
  }

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(registry);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError(404, "unknown session '" + id + "'");
    return it->second;
  }

  std::shared_ptr<Session> session_of(const httplib::Request& req) {
    std::string id;
    if (req.has_param("session"))
      id = req.get_param_value("session");
    else if (req.has_header("X-Session"))
      id = req.get_header_value("X-Session");
    if (id.empty()) throw HttpError(400, "session token required (?session= or X-Session header)");
    return session(id);
  }

  std::shared_ptr<Job> job(const std::string& id) {
    std::lock_guard lock(registry);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw HttpError(404, "unknown job '" + id + "'");
    return it->second;
  }

  static void require_idle(const Session& s) {
    if (!s.job_id.empty()) throw HttpError(409, "a job is running on this session");
  }

  // Called with s.mutex held.
  static void invalidate_from(Session& s, Stage changed) {
    if (changed <= Stage::RoiSet) s.track.reset();
    if (changed <= Stage::Tracked) s.plan.reset();
    if (changed <= Stage::Aligned) s.volume.reset();
    ++s.revision;
  }

  json session_json(Session& s) {
    std::lock_guard lock(s.mutex);
    json d{{"id", s.id},
           {"stage", to_string(s.stage())},
           {"revision", s.revision},
           {"frames", s.stack->size()},
           {"width", s.stack->width()},
           {"height", s.stack->height()},
           {"bit_depth", s.stack->bit_depth},
           {"angle_start", s.stack->angle_start()},
           {"angle_stop", s.stack->angle_stop()}};
    d["roi"] = s.roi ? roi_json(*s.roi) : json(nullptr);
    if (s.track) {
      int hits = 0;
      for (const auto& e : s.track->entries) hits += e.hit ? 1 : 0;
      d["track"] = {{"hits", hits}, {"misses", s.track->size() - hits}};
    } else {
      d["track"] = nullptr;
    }
    d["plan"] = s.plan ? json::parse(plan_to_json(*s.plan)) : json(nullptr);
    d["volume"] = s.volume ? json{{"nx", s.volume->nx}, {"ny", s.volume->ny}, {"nz", s.volume->nz}}
                           : json(nullptr);
    d["job"] = s.job_id.empty() ? json(nullptr) : json(s.job_id);
    return d;
  }

  /// Registers a job on the session and runs `work` on its own thread. `work`
  /// returns a commit function applied under the session lock unless cancelled.
  template <typename Work>
  json launch(const std::shared_ptr<Session>& s, JobKind kind, Work work) {
    auto j = std::make_shared<Job>();
    j->id = token();
    j->session_id = s->id;
    j->kind = kind;
    {
      std::lock_guard lock(s->mutex);
      require_idle(*s);
      s->job_id = j->id;
    }
    {
      std::lock_guard lock(registry);
      jobs[j->id] = j;
    }
    j->thread = std::thread([j, s, work = std::move(work)]() mutable {
      try {
        auto commit = work(*j);
        std::lock_guard lock(s->mutex);
        if (j->cancel) {
          j->state = JobState::Cancelled;
        } else {
          commit(*s);
          j->advance(1.0);
          j->state = JobState::Done;
        }
        s->job_id.clear();
        return;
      } catch (const Cancelled&) {
        j->state = JobState::Cancelled;
      } catch (const std::exception& e) {
        {
          std::lock_guard lock(j->mutex);
          j->error = std::string(to_string(j->kind)) + ": " + e.what();
        }
        j->state = JobState::Failed;
      }
      std::lock_guard lock(s->mutex);
      s->job_id.clear();
    });
    return job_json(*j);
  }

  static Image projection_view(const httplib::Request& req, int k, const std::shared_ptr<const ProjectionStack>& stack,
                               const std::shared_ptr<const AlignmentPlan>& plan) {
    if (k < 0 || k >= stack->size()) throw HttpError(404, "frame index out of range");
    double dx = 0.0, dy = 0.0;
    if (req.get_param_value("shift") == "plan") {
      if (!plan) throw HttpError(409, "no alignment plan yet");
      dx = plan->shifts[k].dx;
      dy = plan->shifts[k].dy;
    }
    if (req.has_param("preview_shift")) {
      const auto parts = split(req.get_param_value("preview_shift"), ',');
      if (parts.size() != 2) throw HttpError(400, "preview_shift must be dx,dy");
      dx += std::stod(parts[0]);
      dy += std::stod(parts[1]);
    }
    return (dx == 0.0 && dy == 0.0) ? stack->frames[k] : apply_shift(stack->frames[k], dx, dy);
  }

  void mount(httplib::Server& svr) {
    const auto wrap = [](auto fn) {
      return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
          fn(req, res);
        } catch (const HttpError& e) {
          res.status = e.status;
          res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 422;
          res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
      };
    };
    const auto send_json = [](httplib::Response& res, const json& d, int status = 200) {
      res.status = status;
      res.set_content(d.dump(), "application/json");
    };

    svr.Post("/session", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      auto s = std::make_shared<Session>();
      if (body.contains("manifest_path")) {
        s->stack = std::make_shared<const ProjectionStack>(
            load_stack(body["manifest_path"].get<std::string>(), options.job_workers));
      } else if (body.contains("phantom")) {
        const json& p = body["phantom"];
        BeadSpec spec;
        spec.frames = p.value("frames", spec.frames);
        spec.size = p.value("size", spec.size);
        spec.bead_radius = p.value("bead_radius", spec.bead_radius);
        spec.bead_offset = p.value("bead_offset", spec.bead_offset);
        spec.jitter_max = p.value("jitter_max", spec.jitter_max);
        spec.noise_sigma = p.value("noise_sigma", spec.noise_sigma);
        spec.seed = p.value("seed", spec.seed);
        s->stack = std::make_shared<const ProjectionStack>(bead_dataset(spec, options.job_workers).first);
      } else {
        throw HttpError(400, "body needs manifest_path or phantom");
      }
      s->id = token();
      {
        std::lock_guard lock(registry);
        sessions[s->id] = s;
      }
      send_json(res, {{"id", s->id}}, 201);
    }));

    svr.Get(R"(/session/([0-9a-f]+))", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      send_json(res, session_json(*session(req.matches[1])));
    }));

    svr.Put("/roi", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      const json b = parse_body(req);
      Roi r;
      try {
        r = {b.at("x0").get<int>(), b.at("y0").get<int>(), b.at("width").get<int>(), b.at("height").get<int>()};
      } catch (const json::exception&) {
        throw HttpError(400, "ROI needs integer x0, y0, width, height");
      }
      std::lock_guard lock(s->mutex);
      require_idle(*s);
      if (!r.inside(s->stack->dims())) throw HttpError(422, "ROI must lie inside the frame");
      s->roi = r;
      invalidate_from(*s, Stage::RoiSet);
      send_json(res, {{"stage", to_string(s->stage())}, {"roi", roi_json(r)}});
    }));

    svr.Post("/detect", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      const json b = parse_body(req);
      const Method method = method_from_string(b.value("method", std::string("gvb")));
      if (method == Method::Manual) throw HttpError(400, "method must be gvb or cfm");
      DetectOptions opts;
      if (b.contains("opts")) {
        const json& o = b["opts"];
        opts.threshold_passes = o.value("threshold_passes", opts.threshold_passes);
        opts.cfm.r_min = o.value("r_min", opts.cfm.r_min);
        opts.cfm.r_max = o.value("r_max", opts.cfm.r_max);
        opts.cfm.score_floor = o.value("score_floor", opts.cfm.score_floor);
      }
      opts.workers = options.job_workers;
      std::shared_ptr<const ProjectionStack> stack;
      Roi roi;
      {
        std::lock_guard lock(s->mutex);
        if (!s->roi) throw HttpError(409, "set an ROI before detection");
        stack = s->stack;
        roi = *s->roi;
      }
      send_json(res,
                launch(s, JobKind::Detect,
                       [stack, roi, method, opts](Job&) {
                         auto track = std::make_shared<const RefTrack>(track_reference(*stack, roi, method, opts));
                         return [track](Session& ss) {
                           ss.track = track;
                           invalidate_from(ss, Stage::Tracked);
                         };
                       }),
                202);
    }));

    svr.Get("/track", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      std::shared_ptr<const RefTrack> track;
      {
        std::lock_guard lock(s->mutex);
        track = s->track;
      }
      if (!track) throw HttpError(409, "no track yet");
      if (req.get_param_value("format") == "json")
        send_json(res, track_json(*track));
      else
        res.set_content(track_to_csv(*track), "text/csv");
    }));

    svr.Get("/plan", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      std::lock_guard lock(s->mutex);
      if (!s->plan) throw HttpError(409, "no alignment plan yet");
      res.set_content(plan_to_json(*s->plan), "application/json");
    }));

    svr.Patch(R"(/shift/(\d+))", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      const int k = std::stoi(req.matches[1]);
      const json b = parse_body(req);
      const double ddx = b.value("ddx", 0.0), ddy = b.value("ddy", 0.0);
      if (!std::isfinite(ddx) || !std::isfinite(ddy)) throw HttpError(400, "non-finite nudge");
      std::lock_guard lock(s->mutex);
      require_idle(*s);
      if (!s->plan) throw HttpError(409, "no alignment plan yet");
      if (k >= s->plan->size()) throw HttpError(404, "frame index out of range");
      AlignmentPlan next = nudge(*s->plan, k, ddx, ddy);
      next.crop = crop_common(next, s->stack->dims());
      s->plan = std::make_shared<const AlignmentPlan>(std::move(next));
      invalidate_from(*s, Stage::Aligned);
      const FrameShift& f = s->plan->shifts[k];
      send_json(res, {{"frame", k},
                      {"dx", f.dx},
                      {"dy", f.dy},
                      {"flagged", f.flagged},
                      {"manual", f.manual},
                      {"target_x", s->plan->targets_x[k]},
                      {"target_y", s->plan->target_y},
                      {"stage", to_string(s->stage())}});
    }));

    svr.Post("/align", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      const json b = parse_body(req);
      const AlignMode mode = align_mode_from_string(b.value("mode", std::string("cosine")));
      const ShiftFill fill = shift_fill_from_string(
          b.contains("fill") && b["fill"].is_number() ? std::to_string(b["fill"].get<double>())
                                                      : b.value("fill", std::string("border")));
      std::shared_ptr<const RefTrack> track;
      FrameDims dims;
      {
        std::lock_guard lock(s->mutex);
        if (!s->track) throw HttpError(409, "run detection before alignment");
        track = s->track;
        dims = s->stack->dims();
      }
      send_json(res,
                launch(s, JobKind::Align,
                       [track, dims, mode, fill](Job&) {
                         auto plan = std::make_shared<const AlignmentPlan>(build_plan(*track, dims, mode));
                         return [plan, fill](Session& ss) {
                           ss.plan = plan;
                           ss.fill = fill;
                           invalidate_from(ss, Stage::Aligned);
                         };
                       }),
                202);
    }));

    svr.Post("/reconstruct", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      const json b = parse_body(req);
      ReconParams p;
      try {
        if (b.contains("filter")) p.filter = filter_from_string(b["filter"].get<std::string>());
        if (b.contains("interpolation"))
          p.interpolation = interpolation_from_string(b["interpolation"].get<std::string>());
        if (b.contains("angle_start")) p.angle_start = b["angle_start"].get<double>();
        if (b.contains("angle_stop")) p.angle_stop = b["angle_stop"].get<double>();
        if (b.contains("output_size") && !b["output_size"].is_null()) p.output_size = b["output_size"].get<int>();
        if (b.contains("row_range") && !b["row_range"].is_null())
          p.row_range = std::make_pair(b["row_range"].at(0).get<int>(), b["row_range"].at(1).get<int>());
        p.attenuation = b.value("attenuation", true);
      } catch (const json::exception& e) {
        throw HttpError(400, std::string("bad reconstruction parameters: ") + e.what());
      }
      p.workers = options.job_workers;
      std::shared_ptr<const ProjectionStack> stack;
      std::shared_ptr<const AlignmentPlan> plan;
      ShiftFill fill;
      {
        std::lock_guard lock(s->mutex);
        if (!s->plan) throw HttpError(409, "alignment plan required before reconstruction");
        stack = s->stack;
        plan = s->plan;
        fill = s->fill;
      }
      send_json(res,
                launch(s, JobKind::Reconstruct,
                       [stack, plan, fill, p](Job& j) {
                         const ProjectionStack aligned = crop_stack(apply_plan(*stack, *plan, fill, p.workers), plan->crop);
                         auto vol = std::make_shared<const Volume>(reconstruct_rows(aligned, p, [&j](double f) {
                           j.advance(f);
                           return !j.cancel.load();
                         }));
                         return [vol, plan](Session& ss) {
                           if (ss.plan != plan) throw Error("plan changed during reconstruction");
                           ss.volume = vol;
                           ++ss.revision;
                         };
                       }),
                202);
    }));

    svr.Get(R"(/job/([0-9a-f]+))", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      send_json(res, job_json(*job(req.matches[1])));
    }));

    svr.Delete(R"(/job/([0-9a-f]+))", wrap([this, send_json](const httplib::Request& req, httplib::Response& res) {
      auto j = job(req.matches[1]);
      j->cancel = true;
      if (j->thread.joinable() && j->thread.get_id() != std::this_thread::get_id()) {
        std::lock_guard lock(registry);
        if (j->thread.joinable()) j->thread.join();
      }
      send_json(res, job_json(*j));
    }));

    svr.Get(R"(/projection/(\d+)\.png)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      const int k = std::stoi(req.matches[1]);
      std::shared_ptr<const ProjectionStack> stack;
      std::shared_ptr<const AlignmentPlan> plan;
      std::shared_ptr<const RefTrack> track;
      std::optional<Roi> roi;
      std::uint64_t rev;
      {
        std::lock_guard lock(s->mutex);
        stack = s->stack;
        plan = s->plan;
        track = s->track;
        roi = s->roi;
        rev = s->revision;
      }
      const Image frame = projection_view(req, k, stack, plan);
      const std::string norm = req.has_param("norm") ? req.get_param_value("norm")
                                                     : (stack->bit_depth == 8 ? "clamp" : "minmax");
      RgbImage rgb = to_rgb(frame, norm == "minmax");
      const double radius = req.has_param("radius") ? std::stod(req.get_param_value("radius")) : 8.0;
      for (const std::string& o : split(req.get_param_value("overlay"), ',')) {
        if (o == "roi") {
          if (roi) draw_rect(rgb, *roi);
        } else if (o == "circle") {
          if (track && track->entries[k].hit) draw_circle(rgb, track->entries[k].x, track->entries[k].y, radius, 255);
        } else if (o == "target") {
          if (plan) draw_circle(rgb, plan->targets_x[k], plan->target_y, radius, 255);
        } else if (!o.empty()) {
          throw HttpError(400, "unknown overlay '" + o + "'");
        }
      }
      res.set_header("ETag", "\"" + s->id + "-" + std::to_string(rev) + "\"");
      res.set_content(encode_png(rgb), "image/png");
    }));

    svr.Get("/trail.png", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      std::shared_ptr<const TrailMap> trail;
      std::shared_ptr<const ProjectionStack> stack;
      {
        std::lock_guard lock(s->mutex);
        trail = s->trail;
        stack = s->stack;
      }
      if (!trail) {
        const double delta = req.has_param("delta") ? std::stod(req.get_param_value("delta")) : 0.0;
        trail = std::make_shared<const TrailMap>(trail_product(*stack, delta, options.job_workers));
        if (!req.has_param("delta")) {
          std::lock_guard lock(s->mutex);
          s->trail = trail;
        }
      }
      const ImageT<std::uint8_t> gray = (trail->mask * 255).cast<std::uint8_t>();
      res.set_header("ETag", "\"" + s->id + "-trail\"");
      res.set_content(encode_png(gray), "image/png");
    }));

    svr.Get(R"(/slice/(axial|coronal|sagittal)/(\d+)\.png)",
            wrap([this](const httplib::Request& req, httplib::Response& res) {
              auto s = session_of(req);
              std::shared_ptr<const Volume> vol;
              std::uint64_t rev;
              {
                std::lock_guard lock(s->mutex);
                vol = s->volume;
                rev = s->revision;
              }
              if (!vol) throw HttpError(409, "no reconstructed volume yet");
              const std::string axis = req.matches[1];
              const int idx = std::stoi(req.matches[2]);
              int ix = vol->nx / 2, iy = vol->ny / 2, iz = vol->nz / 2;
              const int limit = axis == "axial" ? vol->nz : axis == "coronal" ? vol->ny : vol->nx;
              if (idx >= limit) throw HttpError(404, "slice index out of range");
              (axis == "axial" ? iz : axis == "coronal" ? iy : ix) = idx;
              const OrthoViews v = ortho_slices(*vol, ix, iy, iz);
              const Image& img = axis == "axial" ? v.axial : axis == "coronal" ? v.coronal : v.sagittal;
              const bool normalize = req.get_param_value("norm") != "clamp";
              const ImageT<std::uint16_t> q = quantize(img, 8, normalize);
              res.set_header("ETag", "\"" + s->id + "-" + std::to_string(rev) + "-" + axis + "\"");
              res.set_content(encode_png(ImageT<std::uint8_t>(q.cast<std::uint8_t>())), "image/png");
            }));

    svr.Get("/volume.f32", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_of(req);
      std::shared_ptr<const Volume> vol;
      {
        std::lock_guard lock(s->mutex);
        vol = s->volume;
      }
      if (!vol) throw HttpError(409, "no reconstructed volume yet");
      std::string bytes(vol->data.size() * sizeof(float), '\0');
      std::memcpy(bytes.data(), vol->data.data(), bytes.size());
      res.set_header("X-Volume-Shape", std::to_string(vol->nx) + "," + std::to_string(vol->ny) + "," +
                                           std::to_string(vol->nz));
      res.set_header("X-Volume-Order", kVolumeOrder);
      res.set_content(std::move(bytes), "application/octet-stream");
    }));
  }

  void shutdown() {
    std::vector<std::shared_ptr<Job>> all;
    {
      std::lock_guard lock(registry);
      for (auto& [id, j] : jobs) all.push_back(j);
    }
    for (auto& j : all) j->cancel = true;
    for (auto& j : all)
      if (j->thread.joinable()) j->thread.join();
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = options;
}

Service::~Service() { shutdown(); }

void Service::mount(httplib::Server& server) { impl_->mount(server); }

void Service::shutdown() { impl_->shutdown(); }

void serve(const std::string& host, int port, ServiceOptions options) {
  Service service(options);
  httplib::Server svr;
  service.mount(svr);
  if (!svr.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  svr.listen_after_bind();
}

}  // namespace nanoct
