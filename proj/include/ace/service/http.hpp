#pragma once

#include "ace/service/workbench.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace ace::service {

struct HttpOptions {
  /// Directory served at / (the UI bundle). A placeholder page is served when empty.
  std::filesystem::path static_dir;
  /// Poll interval of the event stream while a run is idle.
  int event_wait_ms = 500;
};

/// HTTP/JSON front of a Workbench. Error bodies are
/// {schema_version, error: {code, message, problems?}} with status 400 for
/// validation and config problems, 404 for unknown assets or runs, 422 for a
/// rejected submission (body is the rejected record) and 503 when the queue
/// is full.
class HttpServer {
 public:
  HttpServer(Workbench& workbench, HttpOptions options = {});
  ~HttpServer();

  /// Binds and serves until stop(). Returns false when binding fails.
  bool listen(const std::string& host, int port);
  /// Binds to a free port on `host` and returns it (serve with run()).
  int bind_any_port(const std::string& host);
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  void install_routes();

  Workbench& workbench_;
  HttpOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

/// Splits "host:port" (port alone means 0.0.0.0). Throws ConfigError.
std::pair<std::string, int> parse_listen_address(const std::string& address);

}  // namespace ace::service
