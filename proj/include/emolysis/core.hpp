#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emolysis/error.hpp"

namespace emolysis {

// Plutchik-8 plus `none`. The canonical index order is part of the
// serialization contract.
enum class EmotionLabel : std::uint8_t {
  joy = 0,
  trust,
  fear,
  surprise,
  sadness,
  anticipation,
  anger,
  disgust,
  none,
};

inline constexpr int kNumLabels = 9;

inline constexpr std::array<std::string_view, kNumLabels> kLabelNames{
    "joy", "trust", "fear", "surprise", "sadness", "anticipation", "anger", "disgust", "none"};

inline constexpr std::string_view label_name(EmotionLabel label) {
  return kLabelNames[static_cast<std::size_t>(label)];
}

EmotionLabel parse_label(std::string_view name);

template <typename Scalar>
using EmotionVectorT = Eigen::Matrix<Scalar, kNumLabels, 1>;
using EmotionVector = EmotionVectorT<double>;

/// Nine independent scores in [0,1]. Multilabel: there is no sum constraint and
/// `none` is an ordinary channel.
class EmotionDistribution {
 public:
  EmotionDistribution() : scores_(EmotionVector::Zero()) {}

  /// Throws ValidationError unless every entry is finite and inside [0,1].
  explicit EmotionDistribution(const EmotionVector& scores);

  const EmotionVector& scores() const noexcept { return scores_; }
  double operator[](EmotionLabel label) const noexcept {
    return scores_[static_cast<Eigen::Index>(label)];
  }

  /// The record used when nothing contributes: zeros with none = 1.
  static EmotionDistribution none_only();

  friend bool operator==(const EmotionDistribution& a, const EmotionDistribution& b) {
    return a.scores_ == b.scores_;
  }

 private:
  EmotionVector scores_;
};

EmotionDistribution clamp_distribution(std::span<const double> raw);

template <typename Derived>
EmotionDistribution clamp_distribution(const Eigen::MatrixBase<Derived>& raw) {
  const EmotionVector v = raw;
  return clamp_distribution(std::span<const double>(v.data(), kNumLabels));
}

/// Labels scoring at least `threshold`, in canonical order. With `strict` unset
/// an empty result falls back to the argmax label (lowest index wins ties).
std::vector<EmotionLabel> dominant_labels(const EmotionDistribution& d, double threshold,
                                          bool strict = false);

/// Valence and arousal, each clamped to [-1,1] on construction.
class VAPoint {
 public:
  VAPoint() = default;
  VAPoint(double valence, double arousal);

  double valence() const noexcept { return valence_; }
  double arousal() const noexcept { return arousal_; }
  Eigen::Vector2d vector() const { return {valence_, arousal_}; }

  friend bool operator==(const VAPoint&, const VAPoint&) = default;

 private:
  double valence_ = 0.0;
  double arousal_ = 0.0;
};

/// Half-open [start_s, end_s) with 0 <= start < end, both finite.
class TimeInterval {
 public:
  TimeInterval(double start_s, double end_s);

  double start_s() const noexcept { return start_; }
  double end_s() const noexcept { return end_; }
  double length_s() const noexcept { return end_ - start_; }
  bool contains(double t) const noexcept { return t >= start_ && t < end_; }

  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;

 private:
  double start_;
  double end_;
};

enum class ModalityTag : std::uint8_t { visual = 0, audio, linguistic };

inline constexpr int kNumModalities = 3;
inline constexpr std::array<ModalityTag, kNumModalities> kAllModalities{
    ModalityTag::visual, ModalityTag::audio, ModalityTag::linguistic};

std::string_view to_string(ModalityTag tag);
ModalityTag parse_modality(std::string_view name);

enum class Language : std::uint8_t { en, zh };

std::string_view to_string(Language language);
/// Only "en" and "zh" are supported.
Language parse_language(std::string_view code);

using PersonId = std::int64_t;

struct ModalityObservation {
  ModalityTag modality;
  TimeInterval interval;
  std::optional<PersonId> person_id;  // present iff modality == visual
  EmotionDistribution emotions;
  VAPoint va;
  double confidence = 1.0;

  /// Checks the cross-field invariants; throws ValidationError.
  void validate() const;

  friend bool operator==(const ModalityObservation&, const ModalityObservation&) = default;
};

enum class SessionStatus : std::uint8_t { queued, processing, done, failed };

std::string_view to_string(SessionStatus status);
SessionStatus parse_status(std::string_view name);

inline bool is_terminal(SessionStatus s) {
  return s == SessionStatus::done || s == SessionStatus::failed;
}

struct SessionMeta {
  std::string session_id;
  double duration_s = 0.0;
  double fps = 0.0;
  bool has_audio = false;
  Language language = Language::en;
  SessionStatus status = SessionStatus::queued;
  std::string created_at;  // ISO-8601 UTC
  std::string error;       // set when status == failed

  friend bool operator==(const SessionMeta&, const SessionMeta&) = default;
};

std::string utc_timestamp_now();

}  // namespace emolysis
