#include "emolysis/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>

#include <spdlog/spdlog.h>

#include "emolysis/media.hpp"

namespace emolysis {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMeta = "meta.json";
constexpr std::string_view kTracks = "tracks.jsonl";
constexpr std::string_view kObservations = "observations.jsonl";
constexpr std::string_view kCache = "cache";
constexpr std::string_view kStagingPrefix = ".staging-";

bool valid_id(std::string_view id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) return lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

void write_atomic(const fs::path& path, std::string_view data) {
  // Unique temp name so concurrent writers of the same file never share one.
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = fmt::format("{}.{}.{}.tmp", path.string(), ::getpid(), counter++);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(fmt::format("cannot write '{}': {}", tmp.string(), std::strerror(errno)));
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      ::close(fd);
      throw Error(fmt::format("short write to '{}'", tmp.string()));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, path);
}

Json to_json(const StageFractions& fractions) {
  Json j = Json::object();
  for (auto s : kAllStages) j[std::string(to_string(s))] = fractions[static_cast<std::size_t>(s)];
  return j;
}

Json to_json(const StoredSession& s) {
  Json j = to_json(s.meta);
  j["progress"] = to_json(s.progress);
  j["config"] = s.config;
  return j;
}

StoredSession stored_session_from_json(const Json& j) {
  StoredSession s;
  s.meta = meta_from_json(j);
  if (j.contains("progress")) {
    const auto& p = j.at("progress");
    for (auto st : kAllStages) {
      const std::string key(to_string(st));
      if (p.contains(key) && p.at(key).is_number()) {
        s.progress[static_cast<std::size_t>(st)] = p.at(key).get<double>();
      }
    }
  }
  if (j.contains("config")) s.config = j.at("config");
  return s;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) {
    throw ValidationError(fmt::format("cannot use store directory '{}'", root_.string()));
  }
}

fs::path SessionStore::dir(const std::string& id) const {
  if (!valid_id(id)) throw NotFoundError(fmt::format("unknown session '{}'", id));
  return root_ / id;
}

bool SessionStore::exists(const std::string& id) const {
  return valid_id(id) && fs::is_regular_file(root_ / id / kMeta);
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && valid_id(name) && exists(name)) ids.push_back(name);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SessionStore::create(const StoredSession& session) {
  const auto& id = session.meta.session_id;
  const fs::path final_dir = dir(id);
  if (fs::exists(final_dir)) throw ValidationError(fmt::format("session '{}' already exists", id));
  const fs::path staging = root_ / (std::string(kStagingPrefix) + id);
  fs::create_directories(staging);
  try {
    write_atomic(staging / kMeta, dump_line(to_json(session)) + "\n");
    fs::rename(staging, final_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

void SessionStore::write_meta(const StoredSession& session) {
  write_atomic(dir(session.meta.session_id) / kMeta, dump_line(to_json(session)) + "\n");
}

StoredSession SessionStore::read_meta(const std::string& id) const {
  if (!exists(id)) throw NotFoundError(fmt::format("unknown session '{}'", id));
  return stored_session_from_json(parse_json(read_file(dir(id) / kMeta)));
}

void SessionStore::append_observations(const std::string& id,
                                       std::span<const ModalityObservation> observations) {
  std::string chunk;
  for (const auto& o : observations) chunk += dump_line(to_json(o)) + "\n";
  std::ofstream out(dir(id) / kObservations, std::ios::binary | std::ios::app);
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  out.flush();
  if (!out) throw Error(fmt::format("cannot append observations for '{}'", id));
}

std::vector<ModalityObservation> SessionStore::read_observations(const std::string& id) const {
  std::vector<ModalityObservation> out;
  for (const auto& line : read_lines(dir(id) / kObservations)) {
    out.push_back(observation_from_json(parse_json(line)));
  }
  return out;
}

void SessionStore::write_tracks(const std::string& id, std::span<const tracking::PersonTrack> tracks) {
  std::string body;
  for (const auto& t : tracks) body += dump_line(tracking::to_json(t)) + "\n";
  write_atomic(dir(id) / kTracks, body);
}

std::vector<tracking::PersonTrack> SessionStore::read_tracks(const std::string& id) const {
  std::vector<tracking::PersonTrack> out;
  for (const auto& line : read_lines(dir(id) / kTracks)) out.push_back(tracking::track_from_json(parse_json(line)));
  return out;
}

std::optional<std::string> SessionStore::read_cache(const std::string& id, const std::string& digest) const {
  const fs::path p = dir(id) / kCache / (digest + ".jsonl");
  if (!fs::is_regular_file(p)) return std::nullopt;
  return read_file(p);
}

void SessionStore::write_cache(const std::string& id, const std::string& digest, const std::string& body) {
  const fs::path d = dir(id) / kCache;
  fs::create_directories(d);
  write_atomic(d / (digest + ".jsonl"), body);
}

std::vector<std::string> SessionStore::recover(std::string_view reason) {
  std::vector<std::string> failed;
  std::vector<fs::path> leftovers;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && entry.path().filename().string().starts_with(kStagingPrefix)) {
      leftovers.push_back(entry.path());
    }
  }
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmp") leftovers.push_back(entry.path());
  }
  for (const auto& p : leftovers) {
    std::error_code ec;
    fs::remove_all(p, ec);
  }
  for (const auto& id : list()) {
    StoredSession s;
    try {
      s = read_meta(id);
    } catch (const Error& e) {
      spdlog::error("session {} has unreadable metadata: {}", id, e.what());
      continue;
    }
    if (is_terminal(s.meta.status)) continue;
    s.meta.status = SessionStatus::failed;
    s.meta.error = std::string(reason);
    write_meta(s);
    failed.push_back(id);
  }
  return failed;
}

}  // namespace emolysis
