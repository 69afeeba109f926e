#pragma once

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "emolysis/core.hpp"
#include "emolysis/label_map.hpp"
#include "emolysis/media.hpp"
#include "emolysis/serialization.hpp"
#include "emolysis/tracking.hpp"

namespace emolysis::backends {

struct BackendDescriptor {
  std::string name;
  ModalityTag modality = ModalityTag::visual;
  std::string native_label_space;
  std::vector<Language> languages;  // linguistic backends only
  std::string version;
  std::string va_convention = labels::kSymmetricUnit;
  int max_concurrent_requests = 0;  // 0: unbounded

  bool supports(Language language) const;
};

Json to_json(const BackendDescriptor& d);

/// Output of a backend in its own label space plus the mapped common-space
/// distribution.
struct Prediction {
  Eigen::VectorXd native;
  VAPoint va;
  double confidence = 1.0;
  EmotionDistribution emotions;
};

struct TranscriptSegment {
  TimeInterval interval;
  std::string text;
  Language language;
};

/// What a plugin returns before validation and label mapping.
struct RawPrediction {
  Eigen::VectorXd scores;
  double valence = 0.0;  // in the descriptor's VA convention
  double arousal = 0.0;
  double confidence = 1.0;
};

class VisualBackend {
 public:
  virtual ~VisualBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual RawPrediction predict(const Image& crop) const = 0;
};

class AudioBackend {
 public:
  virtual ~AudioBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual RawPrediction predict(const AudioClip& clip) const = 0;
};

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual RawPrediction predict(const TranscriptSegment& segment) const = 0;
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string name() const = 0;
  virtual std::vector<TranscriptSegment> segments(const AudioClip& clip, Language language) const = 0;
};

// Checked entry points. Precondition violations throw ValidationError; any
// failure inside the plugin, or output breaking the contract, surfaces as
// ModalityUnavailable.
Prediction infer_visual(const VisualBackend& backend, const Image& crop,
                        const labels::LabelMapRegistry& registry);
Prediction infer_audio(const AudioBackend& backend, const AudioClip& clip,
                       const labels::LabelMapRegistry& registry);
Prediction infer_text(const TextBackend& backend, const TranscriptSegment& segment,
                      const labels::LabelMapRegistry& registry);
std::vector<TranscriptSegment> transcribe(const Transcriber& transcriber, const AudioClip& clip,
                                          Language language);
std::vector<TranscriptSegment> transcribe(const Transcriber& transcriber, const AudioClip& clip,
                                          std::string_view language);

/// First backend whose descriptor lists `language`, or nullptr.
const TextBackend* route_text(const std::vector<std::shared_ptr<const TextBackend>>& backends,
                              Language language);

// --- deterministic reference implementations ------------------------------
//
// Scores come from a 64-bit digest of the input bytes (and descriptor
// version) expanded with splitmix64. Reproducible, not meaningful.

inline constexpr std::string_view kReferenceVersion = "ref-1";

/// Splitmix expansion of `digest`: `arity` scores in [0,1) followed by
/// valence and arousal in [-1,1).
RawPrediction expand_digest(std::uint64_t digest, Eigen::Index arity);

std::uint64_t digest_image(std::string_view version, const Image& image);
std::uint64_t digest_audio(std::string_view version, const AudioClip& clip);
std::uint64_t digest_text(std::string_view version, const TranscriptSegment& segment);

class ReferenceVisual final : public VisualBackend {
 public:
  ReferenceVisual();
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  RawPrediction predict(const Image& crop) const override;

 private:
  BackendDescriptor descriptor_;
};

class ReferenceAudio final : public AudioBackend {
 public:
  ReferenceAudio();
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  RawPrediction predict(const AudioClip& clip) const override;

 private:
  BackendDescriptor descriptor_;
};

class ReferenceText final : public TextBackend {
 public:
  explicit ReferenceText(Language language);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  RawPrediction predict(const TranscriptSegment& segment) const override;

 private:
  BackendDescriptor descriptor_;
};

/// Emits nothing for silence, otherwise one segment spanning the clip with
/// placeholder text derived from the audio digest.
class ReferenceTranscriber final : public Transcriber {
 public:
  std::string name() const override { return "reference"; }
  std::vector<TranscriptSegment> segments(const AudioClip& clip, Language language) const override;
};

// --- plugin registry ------------------------------------------------------

struct LinguisticStack {
  std::shared_ptr<const Transcriber> transcriber;
  std::vector<std::shared_ptr<const TextBackend>> text;
};

/// Concrete backends for one session. Null members mean the modality is
/// absent; the pipeline then produces no observations for it.
struct BackendSet {
  std::shared_ptr<const tracking::FaceDetector> detector;
  std::shared_ptr<const VisualBackend> visual;
  std::shared_ptr<const AudioBackend> audio;
  LinguisticStack linguistic;

  std::vector<BackendDescriptor> descriptors() const;
  /// Every descriptor's label space and VA convention must be registered.
  void check(const labels::LabelMapRegistry& registry) const;
};

/// Plugin names per modality; "none" disables a modality.
struct BackendSelection {
  std::string detector = "marker";
  std::string visual = "reference";
  std::string audio = "reference";
  std::string linguistic = "reference";
};

class BackendRegistry {
 public:
  using DetectorFactory = std::function<std::shared_ptr<const tracking::FaceDetector>()>;
  using VisualFactory = std::function<std::shared_ptr<const VisualBackend>()>;
  using AudioFactory = std::function<std::shared_ptr<const AudioBackend>()>;
  using LinguisticFactory = std::function<LinguisticStack()>;

  void add_detector(const std::string& name, DetectorFactory f);
  void add_visual(const std::string& name, VisualFactory f);
  void add_audio(const std::string& name, AudioFactory f);
  void add_linguistic(const std::string& name, LinguisticFactory f);

  /// Throws BackendError for an unknown plugin name.
  BackendSet make(const BackendSelection& selection) const;

  std::vector<std::string> names(ModalityTag modality) const;

  /// Registry with the marker detector and the reference backends.
  static BackendRegistry with_reference();

 private:
  std::map<std::string, DetectorFactory> detectors_;
  std::map<std::string, VisualFactory> visual_;
  std::map<std::string, AudioFactory> audio_;
  std::map<std::string, LinguisticFactory> linguistic_;
};

}  // namespace emolysis::backends
