#include "emolysis/config.hpp"

#include <algorithm>
#include <cmath>

#include "emolysis/media.hpp"

namespace emolysis {

void AnalysisConfig::validate() const {
  if (!std::isfinite(window_s) || !std::isfinite(stride_s) || !(stride_s > 0.0) || !(stride_s <= window_s)) {
    throw ValidationError("config needs 0 < stride_s <= window_s");
  }
  if (!std::isfinite(tick_s) || !(tick_s > 0.0)) throw ValidationError("config needs tick_s > 0");
  if (visual_stride_frames < 1) throw ValidationError("visual_stride_frames must be >= 1");
  if (audio_rate_hz <= 0) throw ValidationError("audio_rate_hz must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must lie in (0,1)");
  if (!(tracker.iou_threshold > 0.0 && tracker.iou_threshold <= 1.0) || !(tracker.ttl_s > 0.0)) {
    throw ValidationError("tracker needs iou_threshold in (0,1] and ttl_s > 0");
  }
  weights.validate();
}

Json to_json(const AnalysisConfig& c) {
  return Json{{"window_s", c.window_s},
              {"stride_s", c.stride_s},
              {"tick_s", c.tick_s},
              {"visual_stride_frames", c.visual_stride_frames},
              {"audio_rate_hz", c.audio_rate_hz},
              {"threshold", c.threshold},
              {"tracker", {{"iou_threshold", c.tracker.iou_threshold}, {"ttl_s", c.tracker.ttl_s}}},
              {"backends",
               {{"detector", c.backends.detector},
                {"visual", c.backends.visual},
                {"audio", c.backends.audio},
                {"linguistic", c.backends.linguistic}}},
              {"fusion",
               {{"weights",
                 {{"visual", c.weights.visual},
                  {"audio", c.weights.audio},
                  {"linguistic", c.weights.linguistic}}}}},
              {"label_maps", c.label_maps}};
}

AnalysisConfig apply_config_json(const Json& j, AnalysisConfig c,
                                 std::span<const std::string_view> foreign_keys) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "window_s") c.window_s = value.get<double>();
      else if (key == "stride_s") c.stride_s = value.get<double>();
      else if (key == "tick_s") c.tick_s = value.get<double>();
      else if (key == "visual_stride_frames") c.visual_stride_frames = value.get<int>();
      else if (key == "audio_rate_hz") c.audio_rate_hz = value.get<int>();
      else if (key == "threshold") c.threshold = value.get<double>();
      else if (key == "label_maps") c.label_maps = value.get<std::string>();
      else if (key == "tracker") {
        if (value.contains("iou_threshold")) c.tracker.iou_threshold = value.at("iou_threshold").get<double>();
        if (value.contains("ttl_s")) c.tracker.ttl_s = value.at("ttl_s").get<double>();
      } else if (key == "backends") {
        if (value.contains("detector")) c.backends.detector = value.at("detector").get<std::string>();
        if (value.contains("visual")) c.backends.visual = value.at("visual").get<std::string>();
        if (value.contains("audio")) c.backends.audio = value.at("audio").get<std::string>();
        if (value.contains("linguistic")) c.backends.linguistic = value.at("linguistic").get<std::string>();
      } else if (key == "fusion") {
        if (value.contains("weights")) {
          const auto& w = value.at("weights");
          if (w.contains("visual")) c.weights.visual = w.at("visual").get<double>();
          if (w.contains("audio")) c.weights.audio = w.at("audio").get<double>();
          if (w.contains("linguistic")) c.weights.linguistic = w.at("linguistic").get<double>();
        }
      } else if (std::find(foreign_keys.begin(), foreign_keys.end(), key) == foreign_keys.end()) {
        throw ValidationError("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

AnalysisConfig load_config(const std::filesystem::path& path, AnalysisConfig base) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
  return apply_config_json(parse_json(text), std::move(base));
}

labels::LabelMapRegistry load_label_maps(const AnalysisConfig& config) {
  if (config.label_maps.empty()) return labels::LabelMapRegistry::builtin();
  try {
    return labels::LabelMapRegistry::load(config.label_maps);
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
}

}  // namespace emolysis
