#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "emolysis/service.hpp"

namespace httplib {
class Server;
}

namespace emolysis {

struct HttpOptions {
  std::string host = "127.0.0.1";
  int port = 8080;                     // 0: pick a free port
  std::filesystem::path static_dir;    // web UI bundle served at "/"; empty: placeholder page
  std::size_t max_upload_bytes = std::size_t{2} << 30;
  int threads = 32;                    // each open event stream holds one
};

/// HTTP front end of a Service.
///
///   POST /api/sessions                 multipart "file" + "language"
///   GET  /api/sessions/{id}
///   GET  /api/sessions/{id}/persons
///   GET  /api/sessions/{id}/timeline   ?persons=&modalities=&from=&to=
///   GET  /api/sessions/{id}/events     WebSocket; Server-Sent Events without an Upgrade header
///   GET  /api/backends
class HttpServer {
 public:
  HttpServer(Service& service, HttpOptions options);
  ~HttpServer();

  /// Binds the listening socket; throws ValidationError when the address is
  /// unavailable. Returns the bound port.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void listen();
  /// bind() and serve on a background thread.
  int start();
  void stop();

  int port() const noexcept { return port_; }

 private:
  void routes();

  Service& service_;
  HttpOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::jthread thread_;
  int port_ = -1;
};

/// Sec-WebSocket-Accept value for a client key.
std::string websocket_accept(std::string_view key);
/// One unmasked server-to-client frame.
std::string websocket_frame(std::uint8_t opcode, std::string_view payload);

}  // namespace emolysis
