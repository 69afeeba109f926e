#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stop_token>
#include <string_view>
#include <vector>

#include "emolysis/backends.hpp"
#include "emolysis/config.hpp"
#include "emolysis/fusion.hpp"
#include "emolysis/label_map.hpp"
#include "emolysis/media.hpp"
#include "emolysis/tracking.hpp"

namespace emolysis {

enum class Stage : std::uint8_t { ingest = 0, visual, audio, linguistic, fuse };

inline constexpr std::array<Stage, 5> kAllStages{Stage::ingest, Stage::visual, Stage::audio,
                                                 Stage::linguistic, Stage::fuse};

std::string_view to_string(Stage stage);

using ProgressFn = std::function<void(Stage stage, double fraction, std::string_view message)>;
/// Receives each stage's observations once the stage completes, in output order.
using ObservationSink = std::function<void(std::span<const ModalityObservation>)>;

struct AnalysisResult {
  MediaInfo info;
  std::vector<tracking::PersonTrack> tracks;
  std::vector<ModalityObservation> observations;

  std::vector<PersonId> person_ids() const;
};

/// Runs `fn(i)` for i in [0, n) on at most `workers` threads (0: one per
/// hardware thread). Rethrows the first failure by index.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// The analysis pipeline: decode segment-wise, track faces, run the modality
/// backends and collect observations in the common label space.
class Pipeline {
 public:
  Pipeline(AnalysisConfig config, std::shared_ptr<const labels::LabelMapRegistry> label_maps,
           backends::BackendSet backends);

  const AnalysisConfig& config() const noexcept { return config_; }
  const backends::BackendSet& backends() const noexcept { return backends_; }

  AnalysisResult run(const MediaReader& media, Language language, const ProgressFn& progress = {},
                     std::stop_token stop = {}, const ObservationSink& sink = {}) const;

  /// Full-selection fused timeline of a finished run.
  fusion::Timeline timeline(const AnalysisResult& result) const;

 private:
  std::vector<ModalityObservation> run_visual(const MediaReader& media, tracking::Tracker& tracker,
                                              const ProgressFn& progress, std::stop_token stop) const;
  std::vector<ModalityObservation> run_audio(const MediaReader& media, const WindowPlan& plan,
                                             const ProgressFn& progress, std::stop_token stop) const;
  std::vector<ModalityObservation> run_linguistic(const MediaReader& media, const WindowPlan& plan,
                                                  Language language, const ProgressFn& progress,
                                                  std::stop_token stop) const;

  AnalysisConfig config_;
  std::shared_ptr<const labels::LabelMapRegistry> label_maps_;
  backends::BackendSet backends_;
};

}  // namespace emolysis
