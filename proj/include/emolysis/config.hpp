#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "emolysis/backends.hpp"
#include "emolysis/fusion.hpp"
#include "emolysis/serialization.hpp"
#include "emolysis/tracking.hpp"
#include "emolysis/windowing.hpp"

namespace emolysis {

/// Everything that shapes an analysis run. Identical configs on identical
/// input give byte-identical output.
struct AnalysisConfig {
  double window_s = kDefaultWindowS;
  double stride_s = kDefaultStrideS;
  double tick_s = kDefaultTickS;
  int visual_stride_frames = 1;
  int audio_rate_hz = kDefaultAudioRateHz;
  double threshold = 0.5;  // multilabel activation threshold
  tracking::TrackerParams tracker;
  backends::BackendSelection backends;
  fusion::FusionWeights weights;
  std::string label_maps;  // path to a label map file; empty: built-in maps

  void validate() const;
};

Json to_json(const AnalysisConfig& config);

/// Overlays the keys present in `j` onto `base`. Unknown top-level keys are
/// rejected unless listed in `foreign_keys` (settings owned by the caller).
AnalysisConfig apply_config_json(const Json& j, AnalysisConfig base = {},
                                 std::span<const std::string_view> foreign_keys = {});

AnalysisConfig load_config(const std::filesystem::path& path, AnalysisConfig base = {});

labels::LabelMapRegistry load_label_maps(const AnalysisConfig& config);

}  // namespace emolysis
