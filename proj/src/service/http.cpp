#include "ace/service/http.hpp"

#include "ace/core/errors.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

namespace ace::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>ace workbench</title></head>"
    "<body><h1>ace workbench</h1><p>No UI bundle is installed. Start the service with --static-dir "
    "to serve one. The JSON API is available under /runs, /datasets, /models, /batches, /health and "
    "/capabilities.</p></body></html>";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(const std::string& code, const std::string& message, const std::vector<std::string>& problems = {}) {
  json err = {{"code", code}, {"message", message}};
  if (!problems.empty()) err["problems"] = problems;
  return {{"schema_version", kSchemaVersion}, {"error", err}};
}

/// Runs `fn`, mapping library exceptions onto HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ItemizedError& e) {
    send_json(res, 400, error_body("validation", e.what(), e.items()));
  } catch (const ConfigError& e) {
    send_json(res, 400, error_body("config", e.what(), e.problems()));
  } catch (const ValidationError& e) {
    send_json(res, 400, error_body("validation", e.what()));
  } catch (const NotFoundError& e) {
    send_json(res, 404, error_body("not_found", e.what()));
  } catch (const QueueFullError& e) {
    res.set_header("Retry-After", "5");
    send_json(res, 503, error_body("queue_full", e.what()));
  } catch (const json::exception& e) {
    send_json(res, 400, error_body("bad_json", e.what()));
  } catch (const std::exception& e) {
    send_json(res, 500, error_body("runtime", e.what()));
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    const long v = std::stol(req.get_param_value(key));
    require(v >= 0, std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw ValidationError(std::string(key) + " must be an integer");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sse_frame(const RunEvent& e) {
  json data = e.data;
  data["schema_version"] = kSchemaVersion;
  return "id: " + std::to_string(e.index) + "\nevent: " + e.type + "\ndata: " + data.dump() + "\n\n";
}

}  // namespace

std::pair<std::string, int> parse_listen_address(const std::string& address) {
  const auto colon = address.rfind(':');
  std::string host = colon == std::string::npos ? "0.0.0.0" : address.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? address : address.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    const int port = std::stoi(port_text, &used);
    if (used != port_text.size() || port < 0 || port > 65535) throw std::invalid_argument("port");
    return {host, port};
  } catch (const std::logic_error&) {
    throw ConfigError("listen address '" + address + "' must be host:port");
  }
}

HttpServer::HttpServer(Workbench& workbench, HttpOptions options)
    : workbench_(workbench), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

void HttpServer::install_routes() {
  auto& s = *server_;
  Workbench& wb = workbench_;

  s.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });

  s.Get("/health", [&wb](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.health()); });
  });
  s.Get("/capabilities", [&wb](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.capabilities()); });
  });

  s.Post("/runs", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json record = wb.submit(parse_body(req));
      send_json(res, record.at("status") == "rejected" ? 422 : 202, record);
    });
  });
  s.Get("/runs", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.runs(req.has_param("status") ? req.get_param_value("status") : "")); });
  });
  s.Get(R"(/runs/([A-Za-z0-9._-]+))", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.run(req.matches[1])); });
  });
  s.Get(R"(/runs/([A-Za-z0-9._-]+)/artifacts/([A-Za-z0-9._-]+))",
        [&wb](const httplib::Request& req, httplib::Response& res) {
          guarded(res, [&] {
            const fs::path path = wb.artifact(req.matches[1], req.matches[2]);
            if (!fs::exists(path)) throw NotFoundError("artifact file is missing");
            res.set_content(read_file(path), path.extension() == ".png" ? "image/png" : "application/json");
          });
        });
  const int wait_ms = options_.event_wait_ms;
  s.Get(R"(/runs/([A-Za-z0-9._-]+)/events)", [&wb, wait_ms](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      wb.run(id);
      int from = 0;
      if (req.has_header("Last-Event-ID")) from = std::stoi(req.get_header_value("Last-Event-ID")) + 1;
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [&wb, id, from, wait_ms](std::size_t,
                                                                                       httplib::DataSink& sink) mutable {
        bool done = false;
        const auto events = wb.store().events(id, from, wait_ms, &done);
        for (const auto& e : events) {
          const std::string frame = sse_frame(e);
          if (!sink.write(frame.data(), frame.size())) return false;
          from = e.index + 1;
        }
        if (done) {
          sink.done();
          return true;
        }
        if (events.empty()) {
          static const std::string keepalive = ": keepalive\n\n";
          if (!sink.write(keepalive.data(), keepalive.size())) return false;
        }
        return true;
      });
    });
  });

  s.Post("/batches/evaluate", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.evaluate(parse_body(req))); });
  });
  s.Get(R"(/batches/([A-Za-z0-9._-]+))", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.batch(req.matches[1])); });
  });

  s.Get("/datasets", [&wb](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.datasets()); });
  });
  s.Get(R"(/datasets/([A-Za-z0-9._-]+)/instances)", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string split = req.has_param("split") ? req.get_param_value("split") : "test";
      send_json(res, 200,
                wb.instances(req.matches[1], split, size_param(req, "offset", 0), size_param(req, "limit", 100)));
    });
  });
  s.Get(R"(/datasets/([A-Za-z0-9._-]+)/instances/([A-Za-z0-9._-]+)/image)",
        [&wb](const httplib::Request& req, httplib::Response& res) {
          guarded(res, [&] {
            const auto bytes = wb.instance_png(req.matches[1], req.matches[2]);
            res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
          });
        });

  s.Get("/models", [&wb](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, wb.models()); });
  });
  s.Post("/models", [&wb](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, wb.register_model(parse_body(req))); });
  });

  if (!options_.static_dir.empty()) {
    if (!s.set_mount_point("/", options_.static_dir.string()))
      throw NotFoundError("static directory " + options_.static_dir.string() + " not found");
  } else {
    s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholderPage, "text/html"); });
  }
}

}  // namespace ace::service
