#include <chrono>
#include <cstring>
#include <thread>

#include "doctest.h"
#include "nanoct/fbp_recon.hpp"
#include "nanoct/phantom_lab.hpp"
#include "nanoct/service.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen's headers.
#include "httplib.h"
#include "json.hpp"

using namespace nanoct;
using nlohmann::json;

namespace {

class Harness {
 public:
  Harness() {
    service_.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(120);
  }
  ~Harness() {
    service_.shutdown();
    server_.stop();
    thread_.join();
  }

  httplib::Client& http() { return *client_; }

  std::string open(const json& phantom) {
    auto r = client_->Post("/session", json{{"phantom", phantom}}.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["id"];
  }

  json get(const std::string& path, int expect = 200) {
    auto r = client_->Get(path);
    REQUIRE(r);
    CHECK_MESSAGE(r->status == expect, path, " ", r->body);
    return r->get_header_value("Content-Type") == "application/json" ? json::parse(r->body) : json(r->body);
  }

  json send(const std::string& method, const std::string& path, const json& body, int expect) {
    const std::string b = body.dump();
    httplib::Result r = method == "POST"    ? client_->Post(path, b, "application/json")
                        : method == "PUT"   ? client_->Put(path, b, "application/json")
                        : method == "PATCH" ? client_->Patch(path, b, "application/json")
                                            : client_->Delete(path);
    REQUIRE(r);
    CHECK_MESSAGE(r->status == expect, method, " ", path, " ", r->body);
    return json::parse(r->body);
  }

  json wait(const std::string& job_id) {
    for (int i = 0; i < 6000; ++i) {
      json j = get("/job/" + job_id);
      if (j["state"] != "RUNNING") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    FAIL("job did not finish");
    return {};
  }

  std::string stage(const std::string& sid) { return get("/session/" + sid)["stage"]; }

 private:
  Service service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

const json kSmall{{"frames", 41}, {"size", 128}, {"bead_offset", 20}, {"jitter_max", 4}, {"seed", 42}};
const json kRoi{{"x0", 30}, {"y0", 22}, {"width", 68}, {"height", 33}};

std::pair<int, int> png_size(const std::string& bytes) {
  REQUIRE(bytes.size() > 24);
  REQUIRE(bytes.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0);
  const auto be32 = [&](int at) {
    int v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  return {be32(16), be32(20)};
}

// Drives a session through ROI, detection and alignment.
void to_aligned(Harness& h, const std::string& q) {
  h.send("PUT", "/roi" + q, kRoi, 200);
  json j = h.send("POST", "/detect" + q, {{"method", "gvb"}}, 202);
  REQUIRE(h.wait(j["id"])["state"] == "DONE");
  j = h.send("POST", "/align" + q, {{"mode", "cosine"}}, 202);
  REQUIRE(h.wait(j["id"])["state"] == "DONE");
}

}  // namespace

TEST_CASE("sessions and ROI") {
  Harness h;
  const std::string sid = h.open(kSmall);
  const std::string q = "?session=" + sid;
  json s = h.get("/session/" + sid);
  CHECK(s["stage"] == "LOADED");
  CHECK(s["frames"] == 41);
  CHECK(s["width"] == 128);
  CHECK(s["roi"].is_null());

  const json put = h.send("PUT", "/roi" + q, kRoi, 200);
  CHECK(put["stage"] == "ROI_SET");
  s = h.get("/session/" + sid);
  CHECK(s["stage"] == "ROI_SET");
  CHECK(s["roi"] == kRoi);

  h.send("PUT", "/roi" + q, {{"x0", 100}, {"y0", 0}, {"width", 40}, {"height", 5}}, 422);
  h.send("PUT", "/roi" + q, {{"x0", "a"}}, 400);
  CHECK(h.get("/session/" + sid)["roi"] == kRoi);

  h.get("/session/0123456789abcdef", 404);
  h.get("/track", 400);
  h.get("/track?session=ffff", 404);
  h.get("/track" + q, 409);
  h.send("POST", "/session", {{"nothing", 1}}, 400);
  auto bad = h.http().Post("/session", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  // The header works in place of the query parameter.
  auto viaHeader = h.http().Get("/projection/0.png", {{"X-Session", sid}});
  REQUIRE(viaHeader);
  CHECK(viaHeader->status == 200);

  // Sessions are independent.
  const std::string other = h.open(kSmall);
  CHECK(other != sid);
  CHECK(h.stage(other) == "LOADED");
}

TEST_CASE("full workflow through reconstruction") {
  Harness h;
  const std::string sid = h.open(kSmall);
  const std::string q = "?session=" + sid;
  h.send("POST", "/detect" + q, {}, 409);
  h.send("PUT", "/roi" + q, kRoi, 200);

  json job = h.send("POST", "/detect" + q, {{"method", "gvb"}}, 202);
  CHECK(job["kind"] == "DETECT");
  job = h.wait(job["id"]);
  CHECK(job["state"] == "DONE");
  CHECK(job["progress"] == 1.0);
  CHECK(h.stage(sid) == "TRACKED");
  CHECK(h.get("/session/" + sid)["track"]["hits"] == 41);

  const json track = h.get("/track" + q + "&format=json");
  REQUIRE(track.size() == 41);
  CHECK(track[0]["hit"] == true);
  const std::string csv = h.get("/track" + q).get<std::string>();
  CHECK(csv.rfind("frame_index", 0) == 0);

  job = h.wait(h.send("POST", "/align" + q, {{"mode", "cosine"}, {"fill", "border"}}, 202)["id"]);
  CHECK(job["state"] == "DONE");
  CHECK(h.stage(sid) == "ALIGNED");
  const json plan = h.get("/plan" + q);
  const double dx3 = plan["shifts"][3]["dx"];

  SUBCASE("nudges compose and invert") {
    json r = h.send("PATCH", "/shift/3" + q, {{"ddx", 0.1}}, 200);
    CHECK(r["dx"] == doctest::Approx(dx3 + 0.1));
    CHECK(r["manual"] == true);
    r = h.send("PATCH", "/shift/3" + q, {{"ddx", -0.2}}, 200);
    r = h.send("PATCH", "/shift/3" + q, {{"ddx", 0.1}}, 200);
    CHECK(r["dx"] == doctest::Approx(dx3).epsilon(1e-12));
    h.send("PATCH", "/shift/99" + q, {{"ddx", 1.0}}, 404);
  }

  SUBCASE("reconstruction reaches progress 1 and exposes the volume") {
    job = h.send("POST", "/reconstruct" + q, {{"filter", "hamming"}, {"interpolation", "linear"}}, 202);
    CHECK(job["kind"] == "RECONSTRUCT");
    job = h.wait(job["id"]);
    CHECK(job["state"] == "DONE");
    CHECK(job["progress"] == 1.0);
    const json s = h.get("/session/" + sid);
    CHECK(s["stage"] == "RECONSTRUCTED");
    const int nx = s["volume"]["nx"], nz = s["volume"]["nz"];
    CHECK(nz == plan["crop"]["height"].get<int>());
    CHECK(nx == default_output_size(plan["crop"]["width"].get<int>()));

    auto vol = h.http().Get("/volume.f32" + q);
    REQUIRE(vol);
    CHECK(vol->status == 200);
    CHECK(vol->body.size() == static_cast<std::size_t>(nx) * nx * nz * sizeof(float));
    CHECK(vol->get_header_value("X-Volume-Shape") ==
          std::to_string(nx) + "," + std::to_string(nx) + "," + std::to_string(nz));
    CHECK_FALSE(vol->get_header_value("X-Volume-Order").empty());

    for (const char* axis : {"axial", "coronal", "sagittal"}) {
      auto png = h.http().Get(std::string("/slice/") + axis + "/0.png" + q);
      REQUIRE(png);
      CHECK(png->status == 200);
      const auto [w, hh] = png_size(png->body);
      CHECK(w == nx);
      CHECK(hh == (std::string(axis) == "axial" ? nx : nz));
    }
    h.get("/slice/axial/100000.png" + q, 404);

    // A nudge drops the volume, a new ROI drops everything downstream.
    h.send("PATCH", "/shift/0" + q, {{"ddy", 0.5}}, 200);
    CHECK(h.stage(sid) == "ALIGNED");
    h.get("/volume.f32" + q, 409);
    h.send("PUT", "/roi" + q, kRoi, 200);
    const json s2 = h.get("/session/" + sid);
    CHECK(s2["stage"] == "ROI_SET");
    CHECK(s2["track"].is_null());
    CHECK(s2["plan"].is_null());
  }

  SUBCASE("parameter errors") {
    h.send("POST", "/reconstruct" + q, {{"filter", "wiener"}}, 422);
    h.send("POST", "/reconstruct" + q, {{"row_range", "x"}}, 400);
    h.send("POST", "/align" + q, {{"mode", "spiral"}}, 422);
    h.send("POST", "/detect" + q, {{"method", "manual"}}, 400);
  }
}

TEST_CASE("one job per session, cancellation keeps the prior stage") {
  Harness h;
  const std::string sid =
      h.open({{"frames", 181}, {"size", 256}, {"bead_offset", 40}, {"jitter_max", 4}, {"seed", 7}});
  const std::string q = "?session=" + sid;
  h.send("PUT", "/roi" + q, {{"x0", 70}, {"y0", 55}, {"width", 116}, {"height", 45}}, 200);
  json j = h.send("POST", "/detect" + q, {}, 202);
  REQUIRE(h.wait(j["id"])["state"] == "DONE");
  j = h.send("POST", "/align" + q, {{"mode", "axis"}}, 202);
  REQUIRE(h.wait(j["id"])["state"] == "DONE");
  const std::uint64_t rev = h.get("/session/" + sid)["revision"];

  j = h.send("POST", "/reconstruct" + q, {}, 202);
  CHECK(h.get("/session/" + sid)["job"] == j["id"]);
  h.send("POST", "/detect" + q, {}, 409);
  h.send("PUT", "/roi" + q, kRoi, 409);
  h.send("PATCH", "/shift/0" + q, {{"ddx", 1}}, 409);
  const json cancelled = h.send("DELETE", "/job/" + j["id"].get<std::string>(), {}, 200);
  CHECK(cancelled["state"] == "CANCELLED");
  CHECK(cancelled["progress"].get<double>() < 1.0);
  const json s = h.get("/session/" + sid);
  CHECK(s["stage"] == "ALIGNED");
  CHECK(s["revision"] == rev);
  CHECK(s["job"].is_null());
  h.get("/job/00000000", 404);

  // The session accepts work again.
  j = h.send("POST", "/reconstruct" + q, {{"row_range", {0, 3}}}, 202);
  CHECK(h.wait(j["id"])["state"] == "DONE");
  CHECK(h.get("/session/" + sid)["volume"]["nz"] == 4);
}

TEST_CASE("failed jobs report the stage") {
  Harness h;
  const std::string sid = h.open({{"frames", 5}, {"size", 64}, {"bead_offset", 10}, {"noise_sigma", 0}});
  const std::string q = "?session=" + sid;
  // An ROI in the empty corner finds no bead with CFM.
  h.send("PUT", "/roi" + q, {{"x0", 0}, {"y0", 0}, {"width", 12}, {"height", 8}}, 200);
  json j = h.wait(h.send("POST", "/detect" + q, {{"method", "cfm"}}, 202)["id"]);
  if (j["state"] == "DONE") {
    CHECK(h.get("/session/" + sid)["track"]["hits"] == 0);
    j = h.wait(h.send("POST", "/align" + q, {}, 202)["id"]);
  }
  CHECK(j["state"] == "FAILED");
  CHECK_FALSE(j["error"].get<std::string>().empty());
  CHECK(h.get("/session/" + sid)["job"].is_null());
}

TEST_CASE("image endpoints") {
  Harness h;
  const std::string sid = h.open(kSmall);
  const std::string q = "?session=" + sid;

  auto plain = h.http().Get("/projection/0.png" + q);
  REQUIRE(plain);
  CHECK(plain->status == 200);
  CHECK(plain->get_header_value("Content-Type") == "image/png");
  CHECK(png_size(plain->body) == std::make_pair(128, 128));
  const std::string etag0 = plain->get_header_value("ETag");
  CHECK_FALSE(etag0.empty());

  h.get("/projection/41.png" + q, 404);
  h.get("/projection/0.png" + q + "&overlay=sparkles", 400);
  h.get("/projection/0.png" + q + "&shift=plan", 409);
  h.get("/projection/0.png" + q + "&preview_shift=1", 400);
  auto preview = h.http().Get("/projection/0.png" + q + "&preview_shift=2.5,-1");
  REQUIRE(preview);
  CHECK(preview->status == 200);
  CHECK(preview->body != plain->body);

  auto trail = h.http().Get("/trail.png" + q);
  REQUIRE(trail);
  CHECK(trail->status == 200);
  CHECK(png_size(trail->body) == std::make_pair(128, 128));
  auto trail15 = h.http().Get("/trail.png" + q + "&delta=15");
  REQUIRE(trail15);
  CHECK(trail15->status == 200);

  to_aligned(h, q);
  auto overlay = h.http().Get("/projection/5.png" + q + "&overlay=roi,circle,target&radius=6&shift=plan");
  REQUIRE(overlay);
  CHECK(overlay->status == 200);
  CHECK(overlay->get_header_value("ETag") != etag0);
  h.get("/slice/axial/0.png" + q, 409);
}
