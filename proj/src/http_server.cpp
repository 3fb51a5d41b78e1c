#include "maat/errors.hpp"
#include "maat/service.hpp"

#include <httplib.h>

namespace maat {

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Service& service, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto out = service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  // Routing, including 404 and 405, lives in Service::handle.
  const std::string any = R"((/.*))";
  server.Get(any, forward);
  server.Post(any, forward);
  server.Put(any, forward);
  server.Delete(any, forward);
  server.Patch(any, forward);

  if (ui_dir && !server.set_mount_point("/ui", ui_dir->string())) {
    throw ConfigError("UI directory " + ui_dir->string() + " does not exist");
  }
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      nlohmann::json body{{"code", res.status == 404 ? "not_found" : "error"},
                          {"message", httplib::status_message(res.status)}};
      res.set_content(body.dump(), "application/json");
    }
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

} // namespace maat
