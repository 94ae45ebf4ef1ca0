#pragma once

#include <functional>
#include <string>

#include <httplib.h>

#include "ccf/service/api.hpp"

namespace ccf::service {

/// Binds the API routes onto an HTTP server. Bodies are produced by
/// `Api::handle`, so HTTP and in-process calls share one code path.
inline void mount(httplib::Server& server, Api& api) {
  auto route = [&api](const httplib::Request& req, httplib::Response& res) {
    auto r = api.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
  };
  for (const char* p : {"models", "datasets"}) server.Get(std::string(kApiPrefix) + p, route);
  for (const char* p : {"forecast", "whatif", "sweep"}) server.Post(std::string(kApiPrefix) + p, route);
  server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

/// Serves until `stop()` is called on the server from another thread.
inline bool serve(Api& api, const std::string& host, int port, const std::function<void(int)>& on_bound = {}) {
  httplib::Server server;
  mount(server, api);
  if (port == 0) {
    port = server.bind_to_any_port(host);
    if (port < 0) return false;
  } else if (!server.bind_to_port(host, port)) {
    return false;
  }
  if (on_bound) on_bound(port);
  return server.listen_after_bind();
}

}  // namespace ccf::service
