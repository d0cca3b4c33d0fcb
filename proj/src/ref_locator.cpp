#include "nanoct/ref_locator.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numbers>
#include <sstream>

namespace nanoct {

std::string to_string(Method m) {
  switch (m) {
    case Method::Gvb: return "gvb";
    case Method::Cfm: return "cfm";
    case Method::Manual: return "manual";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "gvb" || s == "GVB") return Method::Gvb;
  if (s == "cfm" || s == "CFM") return Method::Cfm;
  if (s == "manual" || s == "MANUAL") return Method::Manual;
  throw Error("unknown detection method '" + s + "' (expected gvb|cfm)");
}

namespace {

bool same_split(std::span<const float> values, double a, double b) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  return std::none_of(values.begin(), values.end(), [&](float v) { return v > lo && v <= hi; });
}

}  // namespace

double iterative_threshold(std::span<const float> values) {
  if (values.empty()) throw Error("iterative_threshold on empty input");
  double sum = 0.0;
  for (float v : values) sum += v;
  double t = sum / static_cast<double>(values.size());
  for (int it = 0; it < kThresholdMaxIterations; ++it) {
    double lo = 0.0, hi = 0.0;
    std::size_t nlo = 0, nhi = 0;
    for (float v : values) {
      if (v <= t) {
        lo += v;
        ++nlo;
      } else {
        hi += v;
        ++nhi;
      }
    }
    if (nlo == 0 || nhi == 0) return t;
    const double next = 0.5 * (lo / nlo + hi / nhi);
    // Converged once the split no longer changes; the next update would return
    // `next` again, so the result is an exact fixed point.
    if (std::abs(next - t) < kThresholdTolerance && same_split(values, t, next)) return next;
    t = next;
  }
  return t;
}

namespace {

constexpr int kAngleBins = 36;
constexpr double kEdgeFraction = 0.3;

struct EdgePixel {
  int x, y;
  double ux, uy;  // unit gradient, pointing from dark to bright
  int bin;
};

std::vector<EdgePixel> sobel_edges(const Image& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  std::vector<EdgePixel> edges;
  if (h < 3 || w < 3) return edges;
  Eigen::ArrayXXd gx = Eigen::ArrayXXd::Zero(h, w), gy = Eigen::ArrayXXd::Zero(h, w);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      gx(y, x) = (img(y - 1, x + 1) + 2.0 * img(y, x + 1) + img(y + 1, x + 1)) -
                 (img(y - 1, x - 1) + 2.0 * img(y, x - 1) + img(y + 1, x - 1));
      gy(y, x) = (img(y + 1, x - 1) + 2.0 * img(y + 1, x) + img(y + 1, x + 1)) -
                 (img(y - 1, x - 1) + 2.0 * img(y - 1, x) + img(y - 1, x + 1));
    }
  }
  const Eigen::ArrayXXd mag = (gx.square() + gy.square()).sqrt();
  const double peak = mag.maxCoeff();
  if (!(peak > 1e-6)) return edges;
  const double cutoff = kEdgeFraction * peak;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double m = mag(y, x);
      if (m < cutoff) continue;
      const double ux = gx(y, x) / m, uy = gy(y, x) / m;
      double a = std::atan2(uy, ux);
      if (a < 0) a += 2.0 * std::numbers::pi;
      const int bin = std::min(kAngleBins - 1, static_cast<int>(a / (2.0 * std::numbers::pi) * kAngleBins));
      edges.push_back({x, y, ux, uy, bin});
    }
  }
  return edges;
}

void splat(Eigen::ArrayXXd& acc, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  const auto add = [&](int xi, int yi, double w) {
    if (xi >= 0 && yi >= 0 && xi < acc.cols() && yi < acc.rows()) acc(yi, xi) += w;
  };
  add(x0, y0, (1 - fx) * (1 - fy));
  add(x0 + 1, y0, fx * (1 - fy));
  add(x0, y0 + 1, (1 - fx) * fy);
  add(x0 + 1, y0 + 1, fx * fy);
}

}  // namespace

std::optional<CfmResult> cfm_center(const Image& image, const CfmOptions& opts) {
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  if (!(opts.r_min >= 1.0) || opts.r_max < opts.r_min || !(opts.r_max < std::min(w, h) / 2.0))
    throw Error("invalid CFM radius range [" + std::to_string(opts.r_min) + ", " +
                std::to_string(opts.r_max) + "] for a " + std::to_string(w) + "x" +
                std::to_string(h) + " region");

  const std::vector<EdgePixel> edges = sobel_edges(image);
  if (edges.empty()) return std::nullopt;

  std::vector<double> radii;
  for (double r = opts.r_min; r <= opts.r_max + 1e-9; r += 1.0) radii.push_back(r);

  double best = -1.0;
  int best_x = 0, best_y = 0;
  std::size_t best_r = 0;
  Eigen::ArrayXXd best_acc;
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(h, w);
    for (const auto& e : edges) splat(acc, e.x - radii[ri] * e.ux, e.y - radii[ri] * e.uy);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx >= 0 && yy >= 0 && xx < w && yy < h) s += acc(yy, xx);
          }
        if (s > best) {
          best = s;
          best_x = x;
          best_y = y;
          best_r = ri;
        }
      }
    }
    if (best_r == ri) best_acc = std::move(acc);
  }
  if (!(best > 0.0)) return std::nullopt;

  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int xx = best_x + dx, yy = best_y + dy;
      if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
      const double a = best_acc(yy, xx);
      sw += a;
      sx += a * xx;
      sy += a * yy;
    }
  CfmResult res;
  res.x = sx / sw;
  res.y = sy / sw;
  res.radius = radii[best_r];

  // Score: fraction of edge directions whose votes land near the center.
  std::array<bool, kAngleBins> seen{};
  for (const auto& e : edges) {
    const double vx = e.x - res.radius * e.ux, vy = e.y - res.radius * e.uy;
    if (std::hypot(vx - res.x, vy - res.y) <= 2.0) seen[e.bin] = true;
  }
  int covered = 0;
  for (bool b : seen) covered += b ? 1 : 0;
  res.score = static_cast<double>(covered) / kAngleBins;
  if (res.score < opts.score_floor) return std::nullopt;
  return res;
}

RefTrack track_reference(const ProjectionStack& stack, const Roi& roi, Method method,
                         const DetectOptions& opts) {
  if (!roi.inside(stack.dims())) throw Error("ROI lies outside the frame bounds");
  if (method == Method::Manual) throw Error("manual entries are not produced by a detector");
  if (method == Method::Cfm) {
    const auto& c = opts.cfm;
    if (!(c.r_min >= 1.0) || c.r_max < c.r_min || !(c.r_max < std::min(roi.width, roi.height) / 2.0))
      throw Error("invalid CFM radius range for the ROI");
  }
  RefTrack track;
  track.entries.resize(stack.size());
  const double depth_max = stack.depth_max();
  parallel_for(stack.size(), opts.workers, [&](int k) {
    const auto sub = stack.frames[k].block(roi.y0, roi.x0, roi.height, roi.width);
    TrackEntry& e = track.entries[k];
    e.method = method;
    if (method == Method::Gvb) {
      const GvbResult g = gvb_center(sub, depth_max, std::nullopt, opts.threshold_passes);
      e.x = g.x + roi.x0;
      e.y = g.y + roi.y0;
      e.threshold = g.threshold;
      e.hit = true;
    } else {
      const auto c = cfm_center(Image(sub), opts.cfm);
      if (c) {
        e.x = c->x + roi.x0;
        e.y = c->y + roi.y0;
        e.hit = true;
      } else {
        e.x = e.y = std::numeric_limits<double>::quiet_NaN();
        e.hit = false;
      }
    }
  });
  return track;
}

std::string track_to_csv(const RefTrack& track) {
  std::ostringstream os;
  os.precision(17);
  os << "frame_index,x,y,method,hit,threshold\n";
  for (int k = 0; k < track.size(); ++k) {
    const auto& e = track.entries[k];
    os << k << ',' << e.x << ',' << e.y << ',' << to_string(e.method) << ',' << (e.hit ? 1 : 0)
       << ',';
    if (e.threshold) os << *e.threshold;
    os << '\n';
  }
  return os.str();
}

RefTrack track_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame_index", 0) != 0)
    throw Error("track CSV header missing");
  RefTrack track;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() != 6) throw Error("malformed track row: " + line);
    if (std::stoi(cols[0]) != track.size()) throw Error("track rows out of order");
    TrackEntry e;
    e.x = std::stod(cols[1]);
    e.y = std::stod(cols[2]);
    e.method = method_from_string(cols[3]);
    e.hit = cols[4] == "1";
    if (!cols[5].empty()) e.threshold = std::stod(cols[5]);
    track.entries.push_back(e);
  }
  return track;
}

}  // namespace nanoct
