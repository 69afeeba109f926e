#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "emolysis/backends.hpp"
#include "emolysis/config.hpp"
#include "emolysis/fusion.hpp"
#include "emolysis/store.hpp"

namespace emolysis {

struct ServiceOptions {
  std::filesystem::path store_root = "emolysis-store";
  AnalysisConfig config;
  int workers = 0;            // concurrent sessions; 0: one per hardware thread
  bool start_paused = false;  // queue sessions without running them until resume()
  std::shared_ptr<const backends::BackendRegistry> registry;  // null: reference backends only
};

namespace detail {
struct Job;
}

/// One subscriber's view of a session's event sequence. The first frame is a
/// snapshot of the current state; live frames follow until a completion
/// marker. Frames are JSON objects with a "type" of snapshot, status,
/// progress, complete or error.
class EventStream {
 public:
  enum class Poll { frame, timeout, end };

  /// Waits up to `timeout` for the next frame.
  Poll next(Json& frame, std::chrono::milliseconds timeout);

 private:
  friend class Service;
  std::deque<Json> pending_;
  std::shared_ptr<detail::Job> job_;
  std::size_t cursor_ = 0;
};

/// Session lifecycle over a SessionStore: upload, queued asynchronous
/// analysis with progress events, and read-only queries once done.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Probes the upload and queues it. Throws ValidationError for an
  /// unsupported language and IngestError when the bytes do not decode; in
  /// both cases no session directory is created.
  std::string create_session(std::shared_ptr<const std::string> upload, std::string_view language);

  /// meta.json fields plus per-stage progress. Throws NotFoundError.
  Json status(const std::string& id) const;
  /// {"session_id", "persons": [track...]}. Requires a done session.
  Json persons(const std::string& id) const;
  /// TickRecord JSONL for the selection and optional [from, to) range.
  std::string timeline(const std::string& id, const fusion::Selection& selection,
                       std::optional<double> from_s = std::nullopt, std::optional<double> to_s = std::nullopt);
  /// Descriptors of the configured backends and the names available per modality.
  Json backends() const;

  std::shared_ptr<EventStream> subscribe(const std::string& id);

  /// Starts dispatching sessions queued while paused.
  void resume();
  /// Blocks until the session is done or failed, or the timeout elapses.
  bool wait(const std::string& id, std::chrono::milliseconds timeout);
  /// Cancels running sessions and marks them and any queued ones failed.
  void shutdown();

  const SessionStore& store() const noexcept { return store_; }
  const AnalysisConfig& config() const noexcept { return options_.config; }

 private:
  void worker_loop();
  void process(const std::shared_ptr<detail::Job>& job);
  std::shared_ptr<detail::Job> find_job(const std::string& id) const;
  std::shared_ptr<const fusion::Timeline> view(const std::string& id, const StoredSession& session);
  std::string full_timeline(const std::string& id, const fusion::Timeline& view,
                            const fusion::Selection& selection);

  ServiceOptions options_;
  SessionStore store_;
  std::shared_ptr<const backends::BackendRegistry> registry_;
  std::shared_ptr<const labels::LabelMapRegistry> label_maps_;

  mutable std::mutex mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::shared_ptr<detail::Job>> queue_;
  std::map<std::string, std::shared_ptr<detail::Job>> jobs_;
  std::map<std::string, std::shared_ptr<const fusion::Timeline>> views_;
  bool paused_ = false;
  bool stopping_ = false;
  std::vector<std::jthread> workers_;
};

}  // namespace emolysis
