#include "nanoct/phantom_lab.hpp"

#include <algorithm>
#include <array>
#include <numbers>
#include <random>

#include "json.hpp"

namespace nanoct {

using nlohmann::json;

namespace {

constexpr std::uint64_t kJitterStream = 0x6a17;
constexpr std::uint64_t kNoiseStream = 0x401e;

/// Antiderivative of sqrt(r^2 - x^2).
double half_chord_integral(double x, double r) {
  x = std::clamp(x, -r, r);
  return 0.5 * (x * std::sqrt(std::max(0.0, r * r - x * x)) + r * r * std::asin(x / r));
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

}  // namespace

double disk_box_overlap(double cx, double cy, double r, double x0, double x1, double y0, double y1) {
  if (r <= 0.0 || x1 <= x0 || y1 <= y0) return 0.0;
  const double a = std::max(x0 - cx, -r), b = std::min(x1 - cx, r);
  if (b <= a) return 0.0;
  const double ylo = y0 - cy, yhi = y1 - cy;

  std::vector<double> cuts{a, b};
  for (double yy : {ylo, yhi})
    if (std::abs(yy) < r) {
      const double s = std::sqrt(r * r - yy * yy);
      cuts.push_back(-s);
      cuts.push_back(s);
    }
  std::sort(cuts.begin(), cuts.end());

  double area = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double u = std::max(cuts[i], a), v = std::min(cuts[i + 1], b);
    if (v <= u) continue;
    const double m = 0.5 * (u + v);
    const double sm = std::sqrt(std::max(0.0, r * r - m * m));
    const bool upper_is_circle = sm < yhi;
    const bool lower_is_circle = -sm > ylo;
    const double upper_m = upper_is_circle ? sm : yhi;
    const double lower_m = lower_is_circle ? -sm : ylo;
    if (upper_m <= lower_m) continue;
    const double circle = half_chord_integral(v, r) - half_chord_integral(u, r);
    const double upper = upper_is_circle ? circle : yhi * (v - u);
    const double lower = lower_is_circle ? -circle : ylo * (v - u);
    area += upper - lower;
  }
  return area;
}

std::vector<SampleSphere> default_sample(int size, double bead_row) {
  const double s = size;
  const double z0 = std::max(bead_row + 0.25 * s, 0.55 * s);
  return {
      {0.0, 0.0, z0 + 0.05 * s, 0.10 * s, 0.25 / (0.10 * s)},
      {0.12 * s, -0.05 * s, z0 + 0.15 * s, 0.05 * s, 0.30 / (0.05 * s)},
      {-0.10 * s, 0.08 * s, z0, 0.04 * s, 0.20 / (0.04 * s)},
  };
}

void validate(const BeadSpec& spec) {
  if (spec.frames < 2) throw Error("bead dataset needs at least 2 frames");
  if (spec.size < 16) throw Error("frame size must be at least 16");
  if (!(spec.bead_radius > 0.0)) throw Error("bead radius must be positive");
  if (!(spec.bead_transmission > 0.0 && spec.bead_transmission <= 1.0))
    throw Error("bead transmission must lie in (0, 1]");
  if (spec.jitter_max < 0 || spec.noise_sigma < 0) throw Error("jitter and noise must be non-negative");
  if (!(spec.angle_stop > spec.angle_start)) throw Error("angle_stop must exceed angle_start");
  const double axis = 0.5 * (spec.size - 1);
  const double row = spec.bead_row.value_or(0.3 * spec.size);
  const double reach_x = std::abs(spec.bead_offset) + spec.jitter_max + spec.bead_radius + 1.0;
  const double reach_y = spec.jitter_max + spec.bead_radius + 1.0;
  if (axis - reach_x < 0 || axis + reach_x > spec.size - 1 || row - reach_y < 0 ||
      row + reach_y > spec.size - 1)
    throw Error("bead would leave the frame for some angle or jitter");
}

std::pair<ProjectionStack, GroundTruth> bead_dataset(const BeadSpec& spec, int workers) {
  validate(spec);
  const int n = spec.frames;
  const int d = spec.size;
  const double full = 255.0;
  const double axis = 0.5 * (d - 1);
  const double bead_row = spec.bead_row.value_or(0.3 * d);
  const std::vector<SampleSphere> sample = spec.sample.value_or(default_sample(d, bead_row));
  const std::vector<double> angles = uniform_angles(spec.angle_start, spec.angle_stop, n);

  GroundTruth truth;
  truth.true_r = spec.bead_offset;
  truth.axis_x = axis;
  truth.bead_row = bead_row;
  truth.true_shifts.resize(n);
  truth.true_centers.resize(n);
  {
    auto rng = make_rng(spec.seed, kJitterStream);
    std::uniform_int_distribution<int> jint(-spec.jitter_max, spec.jitter_max);
    std::uniform_real_distribution<double> jreal(-spec.jitter_max, spec.jitter_max);
    for (int k = 0; k < n; ++k) {
      Point2 j;
      if (spec.continuous_jitter) {
        j.x = jreal(rng);
        j.y = jreal(rng);
      } else {
        j.x = jint(rng);
        j.y = jint(rng);
      }
      truth.true_shifts[k] = j;
    }
  }

  std::vector<Image> frames(n);
  parallel_for(n, workers, [&](int k) {
    const double th = angles[k] * std::numbers::pi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const Point2 j = truth.true_shifts[k];
    const double bx = axis - spec.bead_offset * ct + j.x;
    const double by = bead_row + j.y;
    truth.true_centers[k] = {bx, by};

    Eigen::ArrayXXd att = Eigen::ArrayXXd::Zero(d, d);
    for (const SampleSphere& s : sample) {
      const double sx = axis + s.x * ct + s.y * st + j.x;
      const double sy = s.z + j.y;
      const int xa = std::max(0, static_cast<int>(std::floor(sx - s.radius)));
      const int xb = std::min(d - 1, static_cast<int>(std::ceil(sx + s.radius)));
      const int ya = std::max(0, static_cast<int>(std::floor(sy - s.radius)));
      const int yb = std::min(d - 1, static_cast<int>(std::ceil(sy + s.radius)));
      for (int y = ya; y <= yb; ++y)
        for (int x = xa; x <= xb; ++x) {
          const double rho2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
          if (rho2 < s.radius * s.radius) att(y, x) += s.mu * 2.0 * std::sqrt(s.radius * s.radius - rho2);
        }
    }
    Eigen::ArrayXXd img = full * (-att).exp();

    const double r = spec.bead_radius;
    const int xa = std::max(0, static_cast<int>(std::floor(bx - r - 1)));
    const int xb = std::min(d - 1, static_cast<int>(std::ceil(bx + r + 1)));
    const int ya = std::max(0, static_cast<int>(std::floor(by - r - 1)));
    const int yb = std::min(d - 1, static_cast<int>(std::ceil(by + r + 1)));
    for (int y = ya; y <= yb; ++y)
      for (int x = xa; x <= xb; ++x) {
        const double cover = disk_box_overlap(bx, by, r, x - 0.5, x + 0.5, y - 0.5, y + 0.5);
        img(y, x) *= 1.0 - cover * (1.0 - spec.bead_transmission);
      }

    if (spec.noise_sigma > 0.0) {
      auto rng = make_rng(spec.seed, kNoiseStream, static_cast<std::uint64_t>(k));
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] += noise(rng);
    }
    frames[k] = img.round().max(0.0).min(full).cast<float>();
  });

  ProjectionStack stack = make_stack(std::move(frames), spec.angle_start, spec.angle_stop, 8,
                                     "phantom:seed=" + std::to_string(spec.seed));
  return {std::move(stack), std::move(truth)};
}

Image shepp_logan(int size) {
  if (size < 16) throw Error("phantom size must be at least 16");
  struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
  };
  static constexpr std::array<Ellipse, 10> kTable{{
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  }};
  const double c = 0.5 * (size - 1);
  Image img = Image::Zero(size, size);
  for (int row = 0; row < size; ++row) {
    const double y = (c - row) / c;
    for (int col = 0; col < size; ++col) {
      const double x = (col - c) / c;
      double v = 0.0;
      for (const auto& e : kTable) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double w = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img(row, col) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

TrackScore score_track(const RefTrack& track, const GroundTruth& truth) {
  if (track.size() != static_cast<int>(truth.true_centers.size()))
    throw Error("track and ground truth lengths differ");
  TrackScore s;
  double sum = 0.0;
  int hits = 0;
  for (int k = 0; k < track.size(); ++k) {
    const TrackEntry& e = track.entries[k];
    if (!e.hit) {
      ++s.missed;
      continue;
    }
    const double err = std::hypot(e.x - truth.true_centers[k].x, e.y - truth.true_centers[k].y);
    sum += err;
    s.max_abs_err = std::max(s.max_abs_err, err);
    ++hits;
  }
  s.mean_abs_err = hits ? sum / hits : 0.0;
  return s;
}

double rmse(const Volume& a, const Volume& b) {
  if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz) throw Error("rmse: volume shape mismatch");
  const Eigen::Map<const Eigen::ArrayXf> va(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
  const Eigen::Map<const Eigen::ArrayXf> vb(b.data.data(), static_cast<Eigen::Index>(b.data.size()));
  return rmse(va, vb);
}

std::string ground_truth_to_json(const GroundTruth& truth) {
  json shifts = json::array(), centers = json::array();
  for (const auto& p : truth.true_shifts) shifts.push_back({p.x, p.y});
  for (const auto& p : truth.true_centers) centers.push_back({p.x, p.y});
  json doc{{"true_shifts", shifts}, {"true_centers", centers}, {"true_R", truth.true_r},
           {"axis_x", truth.axis_x}, {"bead_row", truth.bead_row}};
  return doc.dump(2);
}

GroundTruth ground_truth_from_json(const std::string& text) {
  const json doc = json::parse(text);
  GroundTruth t;
  for (const auto& p : doc.at("true_shifts")) t.true_shifts.push_back({p[0].get<double>(), p[1].get<double>()});
  for (const auto& p : doc.at("true_centers")) t.true_centers.push_back({p[0].get<double>(), p[1].get<double>()});
  t.true_r = doc.at("true_R").get<double>();
  t.axis_x = doc.value("axis_x", 0.0);
  t.bead_row = doc.value("bead_row", 0.0);
  return t;
}

}  // namespace nanoct
