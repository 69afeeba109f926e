#include "emolysis/service.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <random>

#include "emolysis/digest.hpp"
#include "emolysis/media.hpp"
#include "emolysis/pipeline.hpp"

namespace emolysis {

namespace detail {

struct Job {
  std::string id;
  Language language = Language::en;
  std::shared_ptr<const MediaReader> media;  // the transient working area
  std::stop_source stop;

  std::mutex mutex;
  std::condition_variable cv;
  StoredSession state;
  std::vector<Json> events;
  bool closed = false;
};

}  // namespace detail

namespace {

using detail::Job;

std::string new_session_id() {
  static std::mutex m;
  static std::random_device rd;
  std::lock_guard lock(m);
  const std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  const std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return to_hex(hi) + to_hex(lo);
}

Json status_json(const StoredSession& s) {
  Json j = to_json(s.meta);
  j["progress"] = to_json(s.progress);
  return j;
}

Json snapshot_frame(const StoredSession& s) {
  Json j{{"type", "snapshot"}};
  j.update(status_json(s));
  return j;
}

Json complete_frame(const StoredSession& s) {
  Json j{{"type", "complete"}, {"session_id", s.meta.session_id}, {"status", to_string(s.meta.status)}};
  if (!s.meta.error.empty()) j["error"] = s.meta.error;
  return j;
}

}  // namespace

EventStream::Poll EventStream::next(Json& frame, std::chrono::milliseconds timeout) {
  if (!pending_.empty()) {
    frame = std::move(pending_.front());
    pending_.pop_front();
    return Poll::frame;
  }
  if (!job_) return Poll::end;
  std::unique_lock lock(job_->mutex);
  const bool ready = job_->cv.wait_for(lock, timeout, [&] { return cursor_ < job_->events.size() || job_->closed; });
  if (cursor_ < job_->events.size()) {
    frame = job_->events[cursor_++];
    return Poll::frame;
  }
  if (ready && job_->closed) {
    lock.unlock();
    job_.reset();
    return Poll::end;
  }
  return Poll::timeout;
}

Service::Service(ServiceOptions options)
    : options_(std::move(options)), store_(options_.store_root), registry_(options_.registry) {
  options_.config.validate();
  if (!registry_) registry_ = std::make_shared<const backends::BackendRegistry>(backends::BackendRegistry::with_reference());
  label_maps_ = std::make_shared<const labels::LabelMapRegistry>(load_label_maps(options_.config));
  // Fail at startup, not per session, when the configured backends are unusable.
  registry_->make(options_.config.backends).check(*label_maps_);

  for (const auto& id : store_.recover()) spdlog::warn("session {} was interrupted; marked failed", id);

  paused_ = options_.start_paused;
  const int n = options_.workers > 0 ? options_.workers
                                     : static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  for (int i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() { shutdown(); }

std::string Service::create_session(std::shared_ptr<const std::string> upload, std::string_view language) {
  const Language lang = parse_language(language);
  if (!upload || upload->empty()) throw IngestError("empty upload");

  std::shared_ptr<MediaReader> media;
  try {
    media = MediaReader::open_memory(std::move(upload));
  } catch (const IngestError&) {
    throw;
  } catch (const Error& e) {
    throw IngestError(e.what());
  }

  auto job = std::make_shared<Job>();
  job->id = new_session_id();
  job->language = lang;
  job->media = std::move(media);
  const MediaInfo& info = job->media->info();
  job->state.meta = SessionMeta{job->id, info.duration_s, info.fps, info.has_audio, lang,
                                SessionStatus::queued, utc_timestamp_now(), {}};
  job->state.config = to_json(options_.config);

  std::lock_guard lock(mutex_);
  if (stopping_) throw StateError("service is shutting down");
  store_.create(job->state);
  jobs_[job->id] = job;
  queue_.push_back(job);
  queue_cv_.notify_one();
  spdlog::info("session {} queued ({:.2f} s, {} fps, audio {})", job->id, info.duration_s, info.fps,
               info.has_audio);
  return job->id;
}

std::shared_ptr<Job> Service::find_job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

Json Service::status(const std::string& id) const {
  if (auto job = find_job(id)) {
    std::lock_guard lock(job->mutex);
    return status_json(job->state);
  }
  return status_json(store_.read_meta(id));
}

Json Service::persons(const std::string& id) const {
  const StoredSession s = store_.read_meta(id);
  if (s.meta.status != SessionStatus::done) {
    throw StateError(fmt::format("session '{}' is {}", id, to_string(s.meta.status)));
  }
  Json list = Json::array();
  for (const auto& t : store_.read_tracks(id)) list.push_back(tracking::to_json(t));
  return Json{{"session_id", id}, {"persons", std::move(list)}};
}

std::shared_ptr<const fusion::Timeline> Service::view(const std::string& id, const StoredSession& session) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = views_.find(id); it != views_.end()) return it->second;
  }
  // The session's own config decides tick and weights, whatever this
  // process was started with.
  const AnalysisConfig cfg = apply_config_json(session.config, options_.config);
  std::vector<PersonId> persons;
  for (const auto& t : store_.read_tracks(id)) persons.push_back(t.person_id);
  std::sort(persons.begin(), persons.end());
  auto built = std::make_shared<const fusion::Timeline>(fusion::Timeline::for_session(
      session.meta, cfg.tick_s, store_.read_observations(id), std::move(persons), cfg.weights));
  std::lock_guard lock(mutex_);
  return views_.try_emplace(id, std::move(built)).first->second;
}

std::string Service::full_timeline(const std::string& id, const fusion::Timeline& v,
                                   const fusion::Selection& selection) {
  const fusion::Selection key = selection.resolved(v.persons());
  const std::string digest = key.digest();
  if (auto cached = store_.read_cache(id, digest)) return *cached;
  std::string body = fusion::to_jsonl(v.build(key));
  store_.write_cache(id, digest, body);
  return body;
}

std::string Service::timeline(const std::string& id, const fusion::Selection& selection,
                              std::optional<double> from_s, std::optional<double> to_s) {
  const StoredSession s = store_.read_meta(id);
  if (s.meta.status != SessionStatus::done) {
    throw StateError(fmt::format("session '{}' is {}", id, to_string(s.meta.status)));
  }
  const auto v = view(id, s);
  v->validate(selection);
  std::string body = full_timeline(id, *v, selection);
  if (!from_s && !to_s) return body;

  const auto [first, last] = v->tick_span(from_s.value_or(0.0), to_s.value_or(s.meta.duration_s));
  std::size_t begin = 0;
  std::int64_t line = 0;
  for (; line < first; ++line) begin = body.find('\n', begin) + 1;
  std::size_t end = begin;
  for (; line < last; ++line) end = body.find('\n', end) + 1;
  return body.substr(begin, end - begin);
}

Json Service::backends() const {
  Json active = Json::array();
  for (const auto& d : registry_->make(options_.config.backends).descriptors()) active.push_back(to_json(d));
  Json available = Json::object();
  for (auto m : kAllModalities) available[std::string(to_string(m))] = registry_->names(m);
  return Json{{"selection",
               {{"detector", options_.config.backends.detector},
                {"visual", options_.config.backends.visual},
                {"audio", options_.config.backends.audio},
                {"linguistic", options_.config.backends.linguistic}}},
              {"active", std::move(active)},
              {"available", std::move(available)}};
}

std::shared_ptr<EventStream> Service::subscribe(const std::string& id) {
  auto stream = std::make_shared<EventStream>();
  if (auto job = find_job(id)) {
    std::lock_guard lock(job->mutex);
    stream->pending_.push_back(snapshot_frame(job->state));
    if (!job->closed) {
      stream->job_ = job;
      stream->cursor_ = job->events.size();
    }
    return stream;
  }
  if (store_.exists(id)) {
    stream->pending_.push_back(snapshot_frame(store_.read_meta(id)));
  } else {
    stream->pending_.push_back(Json{{"type", "error"}, {"message", fmt::format("unknown session '{}'", id)}});
  }
  return stream;
}

void Service::resume() {
  std::lock_guard lock(mutex_);
  paused_ = false;
  queue_cv_.notify_all();
}

bool Service::wait(const std::string& id, std::chrono::milliseconds timeout) {
  auto job = find_job(id);
  if (!job) return store_.exists(id) && is_terminal(store_.read_meta(id).meta.status);
  std::unique_lock lock(job->mutex);
  return job->cv.wait_for(lock, timeout, [&] { return job->closed; });
}

void Service::worker_loop() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || (!paused_ && !queue_.empty()); });
      if (stopping_) return;
      job = queue_.front();
      queue_.pop_front();
    }
    process(job);
  }
}

void Service::process(const std::shared_ptr<Job>& job) {
  // Every state change goes to meta.json first, then to subscribers.
  auto publish = [&](Json frame) {
    store_.write_meta(job->state);
    job->events.push_back(std::move(frame));
    job->cv.notify_all();
  };
  auto finish = [&](SessionStatus status, std::string error) {
    std::lock_guard lock(job->mutex);
    job->state.meta.status = status;
    job->state.meta.error = std::move(error);
    job->media.reset();
    publish(complete_frame(job->state));
    job->closed = true;
    job->cv.notify_all();
  };

  {
    std::lock_guard lock(job->mutex);
    job->state.meta.status = SessionStatus::processing;
    publish(Json{{"type", "status"}, {"session_id", job->id}, {"status", "processing"}});
  }

  auto progress = [&](Stage stage, double fraction, std::string_view message) {
    std::lock_guard lock(job->mutex);
    double& current = job->state.progress[static_cast<std::size_t>(stage)];
    fraction = std::max(current, fraction);  // non-decreasing per stage
    current = fraction;
    Json frame{{"type", "progress"}, {"session_id", job->id}, {"stage", to_string(stage)}, {"fraction", fraction}};
    if (!message.empty()) frame["message"] = message;
    publish(std::move(frame));
  };

  try {
    Pipeline pipeline(options_.config, label_maps_, registry_->make(options_.config.backends));
    const auto result = pipeline.run(*job->media, job->language, progress, job->stop.get_token(),
                                     [&](std::span<const ModalityObservation> obs) {
                                       store_.append_observations(job->id, obs);
                                     });
    store_.write_tracks(job->id, result.tracks);
    {
      std::lock_guard lock(job->mutex);
      job->media.reset();
    }
    progress(Stage::fuse, 0.0, {});
    StoredSession done_state;
    {
      std::lock_guard lock(job->mutex);
      done_state = job->state;
    }
    done_state.meta.status = SessionStatus::done;
    // Warm the cache for the default all-persons, all-modalities view.
    const auto v = view(job->id, done_state);
    full_timeline(job->id, *v, fusion::Selection::all());
    progress(Stage::fuse, 1.0, {});
    finish(SessionStatus::done, {});
    spdlog::info("session {} done: {} observations, {} persons", job->id, result.observations.size(),
                 result.tracks.size());
  } catch (const Cancelled&) {
    spdlog::warn("session {} cancelled", job->id);
    finish(SessionStatus::failed, "cancelled: service shut down during processing");
  } catch (const std::exception& e) {
    spdlog::error("session {} failed: {}", job->id, e.what());
    {
      std::lock_guard lock(mutex_);
      views_.erase(job->id);
    }
    finish(SessionStatus::failed, e.what());
  }
}

void Service::shutdown() {
  std::deque<std::shared_ptr<Job>> never_started;
  std::vector<std::shared_ptr<Job>> all;
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
    never_started.swap(queue_);
    for (auto& [id, job] : jobs_) all.push_back(job);
    queue_cv_.notify_all();
  }
  for (auto& job : all) job->stop.request_stop();
  for (auto& job : never_started) {
    std::lock_guard lock(job->mutex);
    job->state.meta.status = SessionStatus::failed;
    job->state.meta.error = "service shut down before processing started";
    job->media.reset();
    store_.write_meta(job->state);
    job->events.push_back(complete_frame(job->state));
    job->closed = true;
    job->cv.notify_all();
  }
  workers_.clear();  // joins; running jobs observe the stop request
}

}  // namespace emolysis
