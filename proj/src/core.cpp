#include "emolysis/core.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace emolysis {

EmotionLabel parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == name) return static_cast<EmotionLabel>(i);
  }
  throw ValidationError("unknown emotion label '" + std::string(name) + "'");
}

EmotionDistribution::EmotionDistribution(const EmotionVector& scores) : scores_(scores) {
  for (int i = 0; i < kNumLabels; ++i) {
    const double s = scores_[i];
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ValidationError("emotion score '" + std::string(kLabelNames[i]) +
                            "' outside [0,1]: " + std::to_string(s));
    }
  }
}

EmotionDistribution EmotionDistribution::none_only() {
  EmotionVector v = EmotionVector::Zero();
  v[static_cast<int>(EmotionLabel::none)] = 1.0;
  return EmotionDistribution(v);
}

EmotionDistribution clamp_distribution(std::span<const double> raw) {
  if (raw.size() != kNumLabels) {
    throw ValidationError("expected " + std::to_string(kNumLabels) + " scores, got " +
                          std::to_string(raw.size()));
  }
  EmotionVector v;
  for (int i = 0; i < kNumLabels; ++i) {
    if (!std::isfinite(raw[i])) {
      throw ValidationError("non-finite score at index " + std::to_string(i));
    }
    v[i] = std::clamp(raw[i], 0.0, 1.0);
  }
  return EmotionDistribution(v);
}

std::vector<EmotionLabel> dominant_labels(const EmotionDistribution& d, double threshold,
                                          bool strict) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("threshold must lie in (0,1)");
  }
  std::vector<EmotionLabel> out;
  for (int i = 0; i < kNumLabels; ++i) {
    if (d.scores()[i] >= threshold) out.push_back(static_cast<EmotionLabel>(i));
  }
  if (out.empty() && !strict) {
    Eigen::Index best = 0;
    d.scores().maxCoeff(&best);  // first maximal coefficient
    out.push_back(static_cast<EmotionLabel>(best));
  }
  return out;
}

VAPoint::VAPoint(double valence, double arousal) {
  if (!std::isfinite(valence) || !std::isfinite(arousal)) {
    throw ValidationError("valence/arousal must be finite");
  }
  valence_ = std::clamp(valence, -1.0, 1.0);
  arousal_ = std::clamp(arousal, -1.0, 1.0);
}

TimeInterval::TimeInterval(double start_s, double end_s) : start_(start_s), end_(end_s) {
  if (!std::isfinite(start_s) || !std::isfinite(end_s)) {
    throw ValidationError("interval bounds must be finite");
  }
  if (start_s < 0.0) throw ValidationError("interval start must be >= 0");
  if (!(start_s < end_s)) {
    throw ValidationError(fmt::format("empty interval [{}, {})", start_s, end_s));
  }
}

std::string_view to_string(ModalityTag tag) {
  switch (tag) {
    case ModalityTag::visual: return "visual";
    case ModalityTag::audio: return "audio";
    case ModalityTag::linguistic: return "linguistic";
  }
  return "?";
}

ModalityTag parse_modality(std::string_view name) {
  for (auto tag : kAllModalities) {
    if (to_string(tag) == name) return tag;
  }
  throw ValidationError("unknown modality '" + std::string(name) + "'");
}

std::string_view to_string(Language language) {
  return language == Language::en ? "en" : "zh";
}

Language parse_language(std::string_view code) {
  if (code == "en") return Language::en;
  if (code == "zh") return Language::zh;
  throw ValidationError("unsupported language '" + std::string(code) + "' (expected en or zh)");
}

void ModalityObservation::validate() const {
  if (person_id.has_value() != (modality == ModalityTag::visual)) {
    throw ValidationError("person_id must be present exactly for visual observations");
  }
  if (person_id && *person_id < 0) throw ValidationError("person_id must be non-negative");
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw ValidationError("confidence outside [0,1]");
  }
}

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::queued: return "queued";
    case SessionStatus::processing: return "processing";
    case SessionStatus::done: return "done";
    case SessionStatus::failed: return "failed";
  }
  return "?";
}

SessionStatus parse_status(std::string_view name) {
  for (auto s : {SessionStatus::queued, SessionStatus::processing, SessionStatus::done,
                 SessionStatus::failed}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown session status '" + std::string(name) + "'");
}

std::string utc_timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%FT%TZ}", fmt::gmtime(now));
}

}  // namespace emolysis
