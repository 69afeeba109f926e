#include "emolysis/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

namespace emolysis {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::visual: return "visual";
    case Stage::audio: return "audio";
    case Stage::linguistic: return "linguistic";
    case Stage::fuse: return "fuse";
  }
  return "?";
}

std::vector<PersonId> AnalysisResult::person_ids() const {
  std::vector<PersonId> ids;
  for (const auto& t : tracks) ids.push_back(t.person_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers)
                                    : std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t i; !failed && (i = next++) < n;) {
            try {
              fn(i);
            } catch (...) {
              errors[i] = std::current_exception();
              failed = true;
            }
          }
        });
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

void report(const ProgressFn& progress, Stage stage, double fraction, std::string_view message = {}) {
  if (progress) progress(stage, std::clamp(fraction, 0.0, 1.0), message);
}

void check_stop(const std::stop_token& stop) {
  if (stop.stop_requested()) throw Cancelled("analysis cancelled");
}

int worker_limit(const backends::BackendDescriptor& d) {
  const int hw = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  return d.max_concurrent_requests > 0 ? std::min(d.max_concurrent_requests, hw) : hw;
}

}  // namespace

Pipeline::Pipeline(AnalysisConfig config, std::shared_ptr<const labels::LabelMapRegistry> label_maps,
                   backends::BackendSet backends)
    : config_(std::move(config)), label_maps_(std::move(label_maps)), backends_(std::move(backends)) {
  config_.validate();
  if (!label_maps_) throw ValidationError("pipeline needs a label map registry");
  backends_.check(*label_maps_);
}

std::vector<ModalityObservation> Pipeline::run_visual(const MediaReader& media, tracking::Tracker& tracker,
                                                      const ProgressFn& progress,
                                                      std::stop_token stop) const {
  const MediaInfo& info = media.info();
  const double frame_span = config_.visual_stride_frames / info.fps;
  std::vector<ModalityObservation> out;

  // Decode one stride-length segment at a time; frame buffers never outlive
  // their iteration and crops die right after inference.
  const auto segments = static_cast<std::int64_t>(std::ceil(info.duration_s / config_.stride_s));
  for (std::int64_t s = 0; s < segments; ++s) {
    const double start = static_cast<double>(s) * config_.stride_s;
    if (!(start < info.duration_s)) break;
    const double end = std::min(start + config_.stride_s, info.duration_s);
    FrameStream stream = media.frames(TimeInterval(start, end));
    while (auto frame = stream.next()) {
      check_stop(stop);
      if (frame->frame_index % config_.visual_stride_frames != 0) continue;

      std::vector<tracking::FaceDetection> detections;
      try {
        detections = tracking::detect(*backends_.detector, *frame);
      } catch (const ModalityUnavailable& e) {
        spdlog::warn("{}", e.what());
        continue;
      }
      const auto ids = tracker.update(detections, frame->timestamp_s);
      const TimeInterval interval(frame->timestamp_s,
                                  std::min(frame->timestamp_s + frame_span, info.duration_s));
      for (std::size_t i = 0; i < detections.size(); ++i) {
        auto crop = tracking::crop_face(*frame, detections[i].bbox);
        if (!crop) continue;
        try {
          const auto p = backends::infer_visual(*backends_.visual, *crop, *label_maps_);
          out.push_back({ModalityTag::visual, interval, ids[i], p.emotions, p.va, p.confidence});
        } catch (const ModalityUnavailable& e) {
          spdlog::warn("visual observation dropped: {}", e.what());
        }
      }
    }
    report(progress, Stage::visual, static_cast<double>(s + 1) / static_cast<double>(segments));
  }
  return out;
}

std::vector<ModalityObservation> Pipeline::run_audio(const MediaReader& media, const WindowPlan& plan,
                                                     const ProgressFn& progress,
                                                     std::stop_token stop) const {
  const auto n = plan.windows.size();
  std::vector<std::optional<ModalityObservation>> slots(n);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(n, worker_limit(backends_.audio->descriptor()), [&](std::size_t i) {
    check_stop(stop);
    const AudioClip clip = media.audio(plan.windows[i], config_.audio_rate_hz);
    try {
      const auto p = backends::infer_audio(*backends_.audio, clip, *label_maps_);
      slots[i] = ModalityObservation{ModalityTag::audio, clip.interval, std::nullopt, p.emotions, p.va,
                                     p.confidence};
    } catch (const ModalityUnavailable& e) {
      spdlog::warn("audio window {} dropped: {}", i, e.what());
    }
    std::lock_guard lock(progress_mutex);
    report(progress, Stage::audio, static_cast<double>(++done) / static_cast<double>(n));
  });
  std::vector<ModalityObservation> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

std::vector<ModalityObservation> Pipeline::run_linguistic(const MediaReader& media, const WindowPlan& plan,
                                                          Language language, const ProgressFn& progress,
                                                          std::stop_token stop) const {
  const auto* text = backends::route_text(backends_.linguistic.text, language);
  const auto n = plan.windows.size();
  std::vector<std::vector<ModalityObservation>> slots(n);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(n, worker_limit(text->descriptor()), [&](std::size_t i) {
    check_stop(stop);
    const AudioClip clip = media.audio(plan.windows[i], config_.audio_rate_hz);
    try {
      for (const auto& seg : backends::transcribe(*backends_.linguistic.transcriber, clip, language)) {
        const auto p = backends::infer_text(*text, seg, *label_maps_);
        slots[i].push_back(
            {ModalityTag::linguistic, seg.interval, std::nullopt, p.emotions, p.va, p.confidence});
      }
    } catch (const ModalityUnavailable& e) {
      spdlog::warn("linguistic window {} dropped: {}", i, e.what());
      slots[i].clear();
    }
    std::lock_guard lock(progress_mutex);
    report(progress, Stage::linguistic, static_cast<double>(++done) / static_cast<double>(n));
  });
  std::vector<ModalityObservation> out;
  for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
  return out;
}

AnalysisResult Pipeline::run(const MediaReader& media, Language language, const ProgressFn& progress,
                             std::stop_token stop, const ObservationSink& sink) const {
  AnalysisResult result;
  report(progress, Stage::ingest, 0.0);
  result.info = media.info();
  report(progress, Stage::ingest, 1.0);

  auto emit = [&](std::vector<ModalityObservation> obs) {
    if (sink) sink(obs);
    result.observations.insert(result.observations.end(), std::make_move_iterator(obs.begin()),
                               std::make_move_iterator(obs.end()));
  };

  tracking::Tracker tracker(config_.tracker);
  if (backends_.visual && backends_.detector) {
    emit(run_visual(media, tracker, progress, stop));
  } else {
    report(progress, Stage::visual, 1.0, "visual backend absent, skipped");
  }
  result.tracks = tracker.tracks();

  const WindowPlan plan = plan_windows(result.info.duration_s, config_.window_s, config_.stride_s);
  if (!result.info.has_audio) {
    report(progress, Stage::audio, 1.0, "no audio stream, skipped");
    report(progress, Stage::linguistic, 1.0, "no audio stream, skipped");
    return result;
  }
  if (backends_.audio) {
    emit(run_audio(media, plan, progress, stop));
  } else {
    report(progress, Stage::audio, 1.0, "audio backend absent, skipped");
  }
  if (backends_.linguistic.transcriber && backends::route_text(backends_.linguistic.text, language)) {
    emit(run_linguistic(media, plan, language, progress, stop));
  } else {
    report(progress, Stage::linguistic, 1.0, "no linguistic backend for this language, skipped");
  }
  return result;
}

fusion::Timeline Pipeline::timeline(const AnalysisResult& result) const {
  return fusion::Timeline(result.info.duration_s, config_.tick_s, result.observations, result.person_ids(),
                          config_.weights);
}

}  // namespace emolysis
