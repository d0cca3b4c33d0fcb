#include <random>
#include <set>

#include "doctest.h"
#include "nanoct/phantom_lab.hpp"
#include "nanoct/ref_locator.hpp"
#include "support.hpp"

using namespace nanoct;
using nanoct::testing::disk_image;

namespace {

// One two-means update from t, written out longhand.
double ridler_step(const std::vector<float>& v, double t) {
  double s0 = 0, s1 = 0;
  int n0 = 0, n1 = 0;
  for (float x : v) {
    if (x <= t) {
      s0 += x;
      ++n0;
    } else {
      s1 += x;
      ++n1;
    }
  }
  if (n0 == 0 || n1 == 0) return t;
  return 0.5 * (s0 / n0 + s1 / n1);
}

std::vector<float> bimodal(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> lo(40.0, 10.0), hi(180.0, 10.0);
  std::bernoulli_distribution pick(0.5);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(std::clamp(std::round(pick(rng) ? hi(rng) : lo(rng)), 0.0, 255.0));
  return v;
}

}  // namespace

TEST_CASE("iterative threshold fixed cases") {
  std::vector<float> half(100, 50.0f);
  std::fill(half.begin() + 50, half.end(), 200.0f);
  CHECK(iterative_threshold(half) == doctest::Approx(125.0));
  CHECK(iterative_threshold(std::vector<float>(30, 42.0f)) == 42.0);
  CHECK_THROWS_AS(iterative_threshold(std::span<const float>{}), Error);
}

TEST_CASE("iterative threshold matches exhaustive integer fixed-point search") {
  const auto v = bimodal(64 * 64, 7);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  // On integer data the split at t depends only on floor(t), so the fixed
  // points are the integers t with floor(step(t)) == t. Thresholds outside
  // [min, max) leave one class empty and are excluded.
  std::set<int> fixed;
  for (int t = static_cast<int>(*lo); t < static_cast<int>(*hi); ++t)
    if (static_cast<int>(std::floor(ridler_step(v, t))) == t) fixed.insert(t);
  REQUIRE(fixed.size() == 1);
  const int t_star = *fixed.begin();
  const double t = iterative_threshold(v);
  CHECK(static_cast<int>(std::floor(t)) == t_star);
  CHECK(t == ridler_step(v, t_star));
  // Values from the first oracle run.
  CHECK(t_star == 109);
  CHECK(t == doctest::Approx(109.978).epsilon(1e-5));
}

TEST_CASE("iterative threshold is idempotent and bounded on random 8-bit images") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<float> v;
    if (trial % 3 == 0) {
      v = bimodal(500 + trial, static_cast<unsigned>(trial));
    } else {
      std::uniform_int_distribution<int> d(0, trial % 2 ? 255 : 3);
      v.resize(1 + trial * 7);
      for (auto& x : v) x = static_cast<float>(d(rng));
    }
    const double t = iterative_threshold(v);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    REQUIRE(t >= *lo);
    REQUIRE(t <= *hi);
    // Restarting the recursion from t returns t.
    CHECK(ridler_step(v, t) == t);
  }
}

TEST_CASE("gvb center small cases") {
  SUBCASE("single pixel below threshold") {
    Image img = Image::Constant(9, 11, 200.0f);
    img(3, 7) = 10.0f;
    const auto c = gvb_center(img, 255.0, 100.0);
    CHECK(c.x == 7.0);
    CHECK(c.y == 3.0);
  }
  SUBCASE("symmetric dark square") {
    Image img = Image::Constant(20, 20, 230.0f);
    img.block(5, 8, 6, 6) = 30.0f;
    img(5, 8) = img(10, 13) = 60.0f;  // centrally symmetric pair
    const auto c = gvb_center(img, 255.0);
    CHECK(c.x == doctest::Approx(10.5));
    CHECK(c.y == doctest::Approx(7.5));
  }
  SUBCASE("hand-evaluated weights 255 and 155") {
    Image img(1, 3);
    img << 0.0f, 255.0f, 100.0f;
    const auto c = gvb_center(img, 255.0, 255.0);
    CHECK(c.x == doctest::Approx(310.0 / 410.0).epsilon(1e-12));
    CHECK(c.x == doctest::Approx(0.7561).epsilon(1e-4));
    CHECK(c.y == 0.0);
  }
  SUBCASE("all candidates at full scale fall back to plain centroid") {
    Image img = Image::Constant(2, 2, 255.0f);
    const auto c = gvb_center(img, 255.0, 255.0);
    CHECK(c.x == 0.5);
    CHECK(c.y == 0.5);
  }
  SUBCASE("16-bit inversion constant") {
    Image img(1, 2);
    img << 0.0f, 60000.0f;
    const auto c = gvb_center(img, 65535.0, 60000.0);
    CHECK(c.x == doctest::Approx(5535.0 / (65535.0 + 5535.0)));
  }
}

TEST_CASE("gvb translation equivariance and hull containment") {
  std::mt19937 rng(21);
  std::uniform_int_distribution<int> val(0, 255), shift(-4, 4);
  for (int trial = 0; trial < 100; ++trial) {
    // Blob of random dark pixels in the middle of a constant bright field.
    Image base = Image::Constant(30, 30, 250.0f);
    for (int y = 11; y < 19; ++y)
      for (int x = 11; x < 19; ++x)
        if (val(rng) < 128) base(y, x) = static_cast<float>(val(rng) / 3);
    const int a = shift(rng), b = shift(rng);
    Image moved = Image::Constant(30, 30, 250.0f);
    moved.block(11 + b, 11 + a, 8, 8) = base.block(11, 11, 8, 8);
    const auto c0 = gvb_center(base, 255.0);
    const auto c1 = gvb_center(moved, 255.0);
    CHECK(c1.x - c0.x == doctest::Approx(a).epsilon(1e-9));
    CHECK(c1.y - c0.y == doctest::Approx(b).epsilon(1e-9));

    double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 30; ++x)
        if (base(y, x) <= c0.threshold) {
          x0 = std::min<double>(x0, x);
          x1 = std::max<double>(x1, x);
          y0 = std::min<double>(y0, y);
          y1 = std::max<double>(y1, y);
        }
    CHECK(c0.x >= x0);
    CHECK(c0.x <= x1);
    CHECK(c0.y >= y0);
    CHECK(c0.y <= y1);
  }
}

TEST_CASE("threshold passes refine within the dark class") {
  Image img = Image::Constant(10, 10, 240.0f);
  img.block(2, 2, 4, 4) = 120.0f;
  img.block(3, 3, 2, 2) = 10.0f;
  const double t1 = refined_threshold(img, 1);
  const double t2 = refined_threshold(img, 2);
  CHECK(t1 > 120.0);
  CHECK(t2 < 120.0);
  CHECK(t2 > 10.0);
  const auto c = gvb_center(img, 255.0, std::nullopt, 2);
  CHECK(c.x == doctest::Approx(3.5));
  CHECK(c.y == doctest::Approx(3.5));
}

TEST_CASE("cfm on synthetic disks") {
  SUBCASE("ideal disk") {
    const Image img = disk_image(40, 32, 20.0, 15.0, 6.0);
    const auto c = cfm_center(img, {4.0, 8.0, 0.6});
    REQUIRE(c);
    CHECK(std::hypot(c->x - 20.0, c->y - 15.0) <= 0.5);
    CHECK(c->radius == doctest::Approx(6.0).epsilon(0.2));
    CHECK(c->score >= 0.9);
  }
  SUBCASE("blank sub-image misses") {
    CHECK_FALSE(cfm_center(Image::Constant(30, 30, 128.0f)));
  }
  SUBCASE("half-occluded disk misses or lands close") {
    const Image img = disk_image(30, 30, 0.0, 15.0, 6.0);
    const auto c = cfm_center(img, {4.0, 8.0, 0.6});
    if (c) CHECK(std::hypot(c->x - 0.0, c->y - 15.0) <= 2.0);
  }
  SUBCASE("radius range perturbation") {
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> pos(14.0, 18.0);
    for (int trial = 0; trial < 10; ++trial) {
      const double cx = pos(rng), cy = pos(rng);
      const Image img = disk_image(32, 32, cx, cy, 6.0);
      const auto ref = cfm_center(img, {4.0, 8.0, 0.6});
      REQUIRE(ref);
      for (double f : {0.8, 1.2}) {
        const auto c = cfm_center(img, {4.0 * f, 8.0 * f, 0.6});
        REQUIRE(c);
        CHECK(std::hypot(c->x - ref->x, c->y - ref->y) <= 0.5);
      }
    }
  }
  SUBCASE("invalid radius range") {
    const Image img = disk_image(20, 20, 10.0, 10.0, 4.0);
    CHECK_THROWS_AS(cfm_center(img, {0.0, 4.0, 0.6}), Error);
    CHECK_THROWS_AS(cfm_center(img, {5.0, 4.0, 0.6}), Error);
    CHECK_THROWS_AS(cfm_center(img, {3.0, 10.0, 0.6}), Error);
  }
}

TEST_CASE("seed-42 bead dataset tracking") {
  BeadSpec spec;
  const auto [stack, truth] = bead_dataset(spec);
  const double margin = spec.jitter_max + spec.bead_radius + 4;
  const Roi roi{static_cast<int>(truth.axis_x - spec.bead_offset - margin),
                static_cast<int>(truth.bead_row - margin),
                static_cast<int>(2 * (spec.bead_offset + margin)), static_cast<int>(2 * margin)};
  REQUIRE(roi.inside(stack.dims()));

  SUBCASE("GVB stays within 4 px") {
    const RefTrack t = track_reference(stack, roi, Method::Gvb);
    REQUIRE(t.size() == stack.size());
    const TrackScore s = score_track(t, truth);
    CHECK(s.missed == 0);
    CHECK(s.max_abs_err <= 4.0);
    CHECK(s.mean_abs_err <= 3.0);
    for (const auto& e : t.entries) {
      CHECK(e.method == Method::Gvb);
      CHECK(roi.contains(e.x, e.y));
      CHECK(e.threshold.has_value());
    }
  }
  SUBCASE("CFM on the noiseless dataset hits every frame within 1 px") {
    BeadSpec clean = spec;
    clean.noise_sigma = 0.0;
    const auto [cs, ct] = bead_dataset(clean);
    const RefTrack t = track_reference(cs, roi, Method::Cfm);
    const TrackScore s = score_track(t, ct);
    CHECK(s.missed == 0);
    CHECK(s.max_abs_err <= 1.0);
  }
}

TEST_CASE("1x1 ROI returns that pixel for every frame") {
  std::vector<Image> frames(4, Image::Constant(8, 8, 100.0f));
  frames[2](3, 5) = 7.0f;
  const auto stack = make_stack(frames, 0.0, 180.0, 8);
  const RefTrack t = track_reference(stack, Roi{5, 3, 1, 1}, Method::Gvb);
  for (const auto& e : t.entries) {
    CHECK(e.hit);
    CHECK(e.x == 5.0);
    CHECK(e.y == 3.0);
  }
}

TEST_CASE("track_reference validation and misses") {
  std::vector<Image> frames(3, Image::Constant(40, 40, 200.0f));
  frames[0] = disk_image(40, 40, 20.0, 20.0, 6.0, 200.0f, 40.0f);
  const auto stack = make_stack(frames, 0.0, 180.0, 8);
  CHECK_THROWS_AS(track_reference(stack, Roi{30, 30, 20, 20}, Method::Gvb), Error);
  CHECK_THROWS_AS(track_reference(stack, Roi{0, 0, 40, 40}, Method::Manual), Error);
  const RefTrack t = track_reference(stack, Roi{0, 0, 40, 40}, Method::Cfm);
  CHECK(t.entries[0].hit);
  CHECK_FALSE(t.entries[1].hit);
  CHECK(std::isnan(t.entries[1].x));
}

TEST_CASE("track CSV round trip") {
  RefTrack t;
  t.entries.push_back({12.25, 30.5, Method::Gvb, true, 101.5});
  t.entries.push_back({std::nan(""), std::nan(""), Method::Cfm, false, std::nullopt});
  t.entries.push_back({1.0 / 3.0, 2.0, Method::Manual, true, std::nullopt});
  const std::string csv = track_to_csv(t);
  CHECK(csv.rfind("frame_index,x,y,method,hit,threshold\n", 0) == 0);
  const RefTrack back = track_from_csv(csv);
  REQUIRE(back.size() == 3);
  CHECK(back.entries[0].x == 12.25);
  CHECK(*back.entries[0].threshold == 101.5);
  CHECK_FALSE(back.entries[1].hit);
  CHECK(std::isnan(back.entries[1].x));
  CHECK(back.entries[1].method == Method::Cfm);
  CHECK(back.entries[2].x == 1.0 / 3.0);
  CHECK(back.entries[2].method == Method::Manual);
  CHECK_THROWS_AS(track_from_csv("x,y\n"), Error);
}

TEST_CASE("method names") {
  for (Method m : {Method::Gvb, Method::Cfm, Method::Manual}) CHECK(method_from_string(to_string(m)) == m);
  CHECK(method_from_string("GVB") == Method::Gvb);
  CHECK_THROWS_AS(method_from_string("hough"), Error);
}
