#pragma once

// Shared helpers for the unit and acceptance tests: scratch directories, the
// synthetic fixture video, child processes and a minimal WebSocket client.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "emolysis/fixture.hpp"
#include "emolysis/media.hpp"
#include "emolysis/serialization.hpp"

extern char** environ;

namespace emolysis::test {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(std::string_view tag = "emolysis") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("{}-{:08x}{:08x}", tag, rd(), rd());
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(std::string_view name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// The default 30 s two-person fixture, generated once per process.
inline std::shared_ptr<const std::string> fixture_bytes() {
  static const auto bytes = std::make_shared<const std::string>(fixture::make_avi(fixture::Spec{}));
  return bytes;
}

/// Fixture written to a per-process temp file.
inline const fs::path& fixture_path() {
  static TempDir dir("emolysis-fixture");
  static const fs::path path = [] {
    const fs::path p = dir / "fixture.avi";
    write_file(p, *fixture_bytes());
    return p;
  }();
  return path;
}

inline std::vector<std::string> split_lines(std::string_view body) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < body.size()) {
    const auto nl = body.find('\n', start);
    const auto end = nl == std::string_view::npos ? body.size() : nl;
    out.emplace_back(body.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

#ifdef EMOLYSIS_CLI_PATH
inline const char* cli_path() { return EMOLYSIS_CLI_PATH; }
#endif

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// A child process with captured stdout and stderr.
class Child {
 public:
  explicit Child(const std::vector<std::string>& argv, const std::vector<std::string>& extra_env = {}) {
    int out_pipe[2];
    int err_pipe[2];
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) throw std::runtime_error("pipe failed");
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, out_pipe[1], 1);
    posix_spawn_file_actions_adddup2(&fa, err_pipe[1], 2);
    posix_spawn_file_actions_addclose(&fa, out_pipe[0]);
    posix_spawn_file_actions_addclose(&fa, err_pipe[0]);

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    std::vector<std::string> env_store;
    for (char** e = environ; *e; ++e) env_store.emplace_back(*e);
    for (const auto& e : extra_env) env_store.push_back(e);
    std::vector<char*> env;
    for (auto& e : env_store) env.push_back(e.data());
    env.push_back(nullptr);

    if (posix_spawn(&pid_, args[0], &fa, nullptr, args.data(), env.data()) != 0) {
      throw std::runtime_error("cannot spawn " + argv[0]);
    }
    posix_spawn_file_actions_destroy(&fa);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    out_fd_ = out_pipe[0];
    err_fd_ = err_pipe[0];
  }
  ~Child() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
    if (out_fd_ >= 0) ::close(out_fd_);
    if (err_fd_ >= 0) ::close(err_fd_);
  }
  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;

  pid_t pid() const { return pid_; }

  /// Reads stdout up to and including the next newline.
  std::optional<std::string> read_line() {
    std::string line;
    char c;
    while (::read(out_fd_, &c, 1) == 1) {
      if (c == '\n') return line;
      line.push_back(c);
    }
    return std::nullopt;
  }

  void signal(int sig) { ::kill(pid_, sig); }

  ProcessResult wait() {
    ProcessResult r;
    r.out = drain(out_fd_);
    r.err = drain(err_fd_);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return r;
  }

 private:
  static std::string drain(int fd) {
    std::string s;
    char buf[4096];
    for (ssize_t n; (n = ::read(fd, buf, sizeof buf)) > 0;) s.append(buf, static_cast<std::size_t>(n));
    return s;
  }

  pid_t pid_ = -1;
  int out_fd_ = -1;
  int err_fd_ = -1;
};

inline ProcessResult run_process(const std::vector<std::string>& argv, const std::vector<std::string>& env = {}) {
  Child c(argv, env);
  return c.wait();
}

/// Blocking TCP connection to 127.0.0.1.
class Socket {
 public:
  explicit Socket(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd_);
      throw std::runtime_error("connect failed");
    }
    timeval tv{30, 0};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
  ~Socket() { ::close(fd_); }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  void send(std::string_view data) {
    while (!data.empty()) {
      const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n <= 0) throw std::runtime_error("send failed");
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  /// Exactly n bytes, or fewer if the peer closes.
  std::string recv_exact(std::size_t n) {
    std::string out;
    while (out.size() < n) {
      if (!buffer_.empty()) {
        const auto take = std::min(n - out.size(), buffer_.size());
        out += buffer_.substr(0, take);
        buffer_.erase(0, take);
        continue;
      }
      char buf[4096];
      const auto got = ::recv(fd_, buf, sizeof buf, 0);
      if (got <= 0) break;
      buffer_.append(buf, static_cast<std::size_t>(got));
    }
    return out;
  }

  std::string recv_until(std::string_view delim) {
    for (;;) {
      if (auto pos = buffer_.find(delim); pos != std::string::npos) {
        std::string out = buffer_.substr(0, pos + delim.size());
        buffer_.erase(0, pos + delim.size());
        return out;
      }
      char buf[4096];
      const auto got = ::recv(fd_, buf, sizeof buf, 0);
      if (got <= 0) {
        std::string out;
        out.swap(buffer_);
        return out;
      }
      buffer_.append(buf, static_cast<std::size_t>(got));
    }
  }

 private:
  int fd_ = -1;
  std::string buffer_;
};

struct WsFrame {
  int opcode;
  std::string payload;
};

/// WebSocket client side of one events subscription: performs the upgrade
/// handshake and reads frames until the server closes.
class WsClient {
 public:
  WsClient(int port, const std::string& path) : sock_(port) {
    sock_.send("GET " + path +
               " HTTP/1.1\r\nHost: 127.0.0.1\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
               "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
    response_head = sock_.recv_until("\r\n\r\n");
  }

  /// The handshake response header block.
  std::string response_head;

  std::optional<WsFrame> next() {
    const std::string h = sock_.recv_exact(2);
    if (h.size() < 2) return std::nullopt;
    WsFrame f{static_cast<unsigned char>(h[0]) & 0x0F, {}};
    std::uint64_t n = static_cast<unsigned char>(h[1]) & 0x7F;
    if (n == 126 || n == 127) {
      const std::string ext = sock_.recv_exact(n == 126 ? 2 : 8);
      n = 0;
      for (unsigned char c : ext) n = (n << 8) | c;
    }
    f.payload = sock_.recv_exact(static_cast<std::size_t>(n));
    return f;
  }

  /// Text frames until the close frame; `closed` reports whether one arrived.
  std::vector<Json> collect(bool* closed = nullptr) {
    std::vector<Json> frames;
    bool saw_close = false;
    while (auto f = next()) {
      if (f->opcode == 0x8) {
        saw_close = true;
        break;
      }
      if (f->opcode == 0x1) frames.push_back(Json::parse(f->payload));
    }
    if (closed) *closed = saw_close;
    return frames;
  }

 private:
  Socket sock_;
};

}  // namespace emolysis::test
