#pragma once

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace nanoct {

struct ServiceOptions {
  /// Threads used inside a job (detection, alignment, reconstruction).
  int job_workers = 0;
};

/// Multi-session workbench state behind the HTTP API. Sessions are addressed
/// by token: in the path for /session/{id}, otherwise through the `session`
/// query parameter or the `X-Session` header.
///
///   POST   /session {manifest_path} | {phantom: {...}}   -> {id}
///   GET    /session/{id}
///   GET    /projection/{k}.png ?overlay=roi,circle,target &radius= &shift=plan &preview_shift=dx,dy
///   GET    /trail.png
///   PUT    /roi {x0, y0, width, height}
///   POST   /detect {method, opts}                         -> job
///   GET    /track ?format=csv|json
///   GET    /plan
///   PATCH  /shift/{k} {ddx, ddy}
///   POST   /align {mode, fill}                            -> job
///   POST   /reconstruct {filter, interpolation, ...}      -> job
///   GET    /job/{id}          DELETE /job/{id}
///   GET    /slice/{axial|coronal|sagittal}/{index}.png ?norm=minmax|clamp
///   GET    /volume.f32
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Registers every route on `server`. The service must outlive the server.
  void mount(httplib::Server& server);

  /// Requests cancellation of all running jobs and waits for them.
  void shutdown();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking: serves the API on host:port until the process is stopped.
void serve(const std::string& host, int port, ServiceOptions options = {});

}  // namespace nanoct
