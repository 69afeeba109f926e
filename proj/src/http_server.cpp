#include "emolysis/http_server.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <charconv>

#include "httplib.h"

namespace emolysis {

namespace {

constexpr std::string_view kWebSocketGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr const char* kUpgradeMarker = "X-Emolysis-Upgrade";
constexpr auto kPollInterval = std::chrono::milliseconds(200);

constexpr std::string_view kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>Emolysis</title></head>
<body><h1>Emolysis service</h1>
<p>No web console bundle is installed. Start the server with <code>--static-dir</code> to serve one.</p>
<p>API root: <code>/api/sessions</code>, <code>/api/backends</code>.</p></body></html>
)";

void send_json(httplib::Response& res, const Json& j, int status = 200) {
  res.status = status;
  res.set_content(dump_line(j), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, Json{{"error", message}}, status);
}

/// Maps the error hierarchy onto HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const IngestError& e) {
    send_error(res, 422, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const StateError& e) {
    send_error(res, 409, e.what());
  } catch (const BackendError& e) {
    send_error(res, 503, e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    send_error(res, 500, e.what());
  }
}

std::optional<double> query_double(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ValidationError(fmt::format("query parameter '{}' must be a number, got '{}'", name, v));
  }
  return out;
}

bool wants_websocket(const httplib::Request& req) {
  std::string upgrade = req.get_header_value("Upgrade");
  std::transform(upgrade.begin(), upgrade.end(), upgrade.begin(), [](unsigned char c) { return std::tolower(c); });
  return upgrade == "websocket" && req.has_header("Sec-WebSocket-Key");
}

}  // namespace

std::string websocket_accept(std::string_view key) {
  const std::string input = std::string(key) + std::string(kWebSocketGuid);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 unavailable");
  }
  return httplib::detail::base64_encode(std::string(reinterpret_cast<const char*>(md), len));
}

std::string websocket_frame(std::uint8_t opcode, std::string_view payload) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | (opcode & 0x0F)));
  const std::uint64_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(n));
  } else if (n <= 0xFFFF) {
    f.push_back(static_cast<char>(126));
    f.push_back(static_cast<char>((n >> 8) & 0xFF));
    f.push_back(static_cast<char>(n & 0xFF));
  } else {
    f.push_back(static_cast<char>(127));
    for (int shift = 56; shift >= 0; shift -= 8) f.push_back(static_cast<char>((n >> shift) & 0xFF));
  }
  f.append(payload);
  return f;
}

HttpServer::HttpServer(Service& service, HttpOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  const int threads = options_.threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  server_->set_payload_max_length(options_.max_upload_bytes);
  // httplib's default adds SO_REUSEPORT, which lets a second server bind a
  // port that is already serving.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::routes() {
  auto& svr = *server_;

  svr.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_file("file")) throw ValidationError("multipart field 'file' is required");
      const std::string language = req.has_file("language") ? req.get_file_value("language").content
                                                            : req.get_param_value("language");
      auto upload = std::make_shared<const std::string>(req.get_file_value("file").content);
      const std::string id = service_.create_session(std::move(upload), language);
      send_json(res, Json{{"session_id", id}}, 201);
    });
  });

  svr.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service_.status(req.matches[1])); });
  });

  svr.Get(R"(/api/sessions/([^/]+)/persons)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service_.persons(req.matches[1])); });
  });

  svr.Get(R"(/api/sessions/([^/]+)/timeline)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto persons = fusion::parse_person_list(req.get_param_value("persons"));
      const auto modalities = req.has_param("modalities")
                                  ? fusion::parse_modality_list(req.get_param_value("modalities"))
                                  : std::vector<ModalityTag>(kAllModalities.begin(), kAllModalities.end());
      const auto selection = fusion::Selection::make(persons, modalities);
      const auto body = service_.timeline(req.matches[1], selection, query_double(req, "from"),
                                          query_double(req, "to"));
      res.set_content(body, "application/x-ndjson");
    });
  });

  svr.Get(R"(/api/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    auto stream = service_.subscribe(req.matches[1]);
    if (wants_websocket(req)) {
      res.status = 101;
      res.set_header("Sec-WebSocket-Accept", websocket_accept(req.get_header_value("Sec-WebSocket-Key")));
      res.set_header(kUpgradeMarker, "1");
      res.set_content_provider("application/octet-stream", [stream](std::size_t, httplib::DataSink& sink) {
        Json frame;
        switch (stream->next(frame, kPollInterval)) {
          case EventStream::Poll::frame: {
            const std::string bytes = websocket_frame(0x1, dump_line(frame));
            return sink.write(bytes.data(), bytes.size());
          }
          case EventStream::Poll::timeout:
            return true;
          case EventStream::Poll::end: {
            const std::string close = websocket_frame(0x8, std::string_view("\x03\xE8", 2));
            sink.write(close.data(), close.size());
            // Returning false ends the exchange and closes the socket, so
            // httplib never tries to read the client's close frame as HTTP.
            return false;
          }
        }
        return false;
      });
      return;
    }
    res.set_chunked_content_provider("text/event-stream", [stream](std::size_t, httplib::DataSink& sink) {
      Json frame;
      switch (stream->next(frame, kPollInterval)) {
        case EventStream::Poll::frame: {
          const std::string line = "data: " + dump_line(frame) + "\n\n";
          return sink.write(line.data(), line.size());
        }
        case EventStream::Poll::timeout:
          return true;
        case EventStream::Poll::end:
          sink.done();
          return true;
      }
      return false;
    });
  });

  svr.Get("/api/backends", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service_.backends()); });
  });

  if (!options_.static_dir.empty()) {
    if (!svr.set_mount_point("/", options_.static_dir.string())) {
      throw ValidationError(fmt::format("static directory '{}' does not exist", options_.static_dir.string()));
    }
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string(kPlaceholderPage), "text/html; charset=utf-8");
    });
  }

  // httplib has no notion of protocol upgrades; rewrite the 101 response
  // headers it generated for an ordinary keep-alive reply.
  svr.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.has_header(kUpgradeMarker)) return;
    for (const char* h : {kUpgradeMarker, "Keep-Alive", "Content-Type", "Connection", "Content-Length"}) {
      res.headers.erase(h);
    }
    res.set_header("Upgrade", "websocket");
    res.set_header("Connection", "Upgrade");
  });

  svr.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

int HttpServer::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
  } else if (server_->bind_to_port(options_.host, options_.port)) {
    port_ = options_.port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) {
    throw ValidationError(fmt::format("cannot bind {}:{} (address in use?)", options_.host, options_.port));
  }
  return port_;
}

void HttpServer::listen() { server_->listen_after_bind(); }

int HttpServer::start() {
  const int p = bind();
  thread_ = std::jthread([this] { listen(); });
  server_->wait_until_ready();
  return p;
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace emolysis
