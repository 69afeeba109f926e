#include "emolysis/serialization.hpp"

namespace emolysis {
namespace {

template <typename T>
T field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw ValidationError(std::string("missing field '") + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("field '") + name + "': " + e.what());
  }
}

}  // namespace

Json to_json(const EmotionDistribution& d) {
  Json j = Json::object();
  for (int i = 0; i < kNumLabels; ++i) j[std::string(kLabelNames[i])] = d.scores()[i];
  return j;
}

Json to_json(const VAPoint& va) {
  return Json{{"valence", va.valence()}, {"arousal", va.arousal()}};
}

Json to_json(const TimeInterval& interval) {
  return Json{{"start_s", interval.start_s()}, {"end_s", interval.end_s()}};
}

Json to_json(const ModalityObservation& obs) {
  Json j = Json::object();
  j["modality"] = to_string(obs.modality);
  j["interval"] = to_json(obs.interval);
  if (obs.person_id) j["person_id"] = *obs.person_id;
  j["emotions"] = to_json(obs.emotions);
  j["va"] = to_json(obs.va);
  j["confidence"] = obs.confidence;
  return j;
}

Json to_json(const SessionMeta& meta) {
  Json j = Json::object();
  j["session_id"] = meta.session_id;
  j["duration_s"] = meta.duration_s;
  j["fps"] = meta.fps;
  j["has_audio"] = meta.has_audio;
  j["language"] = to_string(meta.language);
  j["status"] = to_string(meta.status);
  j["created_at"] = meta.created_at;
  if (!meta.error.empty()) j["error"] = meta.error;
  return j;
}

EmotionDistribution emotions_from_json(const Json& j) {
  EmotionVector v;
  for (int i = 0; i < kNumLabels; ++i) v[i] = field<double>(j, kLabelNames[i].data());
  return EmotionDistribution(v);
}

VAPoint va_from_json(const Json& j) {
  const double v = field<double>(j, "valence");
  const double a = field<double>(j, "arousal");
  if (v < -1.0 || v > 1.0 || a < -1.0 || a > 1.0) {
    throw ValidationError("valence/arousal outside [-1,1]");
  }
  return VAPoint(v, a);
}

TimeInterval interval_from_json(const Json& j) {
  return TimeInterval(field<double>(j, "start_s"), field<double>(j, "end_s"));
}

ModalityObservation observation_from_json(const Json& j) {
  ModalityObservation obs{
      .modality = parse_modality(field<std::string>(j, "modality")),
      .interval = interval_from_json(field<Json>(j, "interval")),
      .person_id = std::nullopt,
      .emotions = emotions_from_json(field<Json>(j, "emotions")),
      .va = va_from_json(field<Json>(j, "va")),
      .confidence = field<double>(j, "confidence"),
  };
  if (j.contains("person_id")) obs.person_id = field<PersonId>(j, "person_id");
  obs.validate();
  return obs;
}

SessionMeta meta_from_json(const Json& j) {
  SessionMeta meta;
  meta.session_id = field<std::string>(j, "session_id");
  meta.duration_s = field<double>(j, "duration_s");
  meta.fps = field<double>(j, "fps");
  meta.has_audio = field<bool>(j, "has_audio");
  meta.language = parse_language(field<std::string>(j, "language"));
  meta.status = parse_status(field<std::string>(j, "status"));
  meta.created_at = field<std::string>(j, "created_at");
  if (j.contains("error")) meta.error = field<std::string>(j, "error");
  if (!(meta.duration_s > 0.0) || !(meta.fps > 0.0)) {
    throw ValidationError("duration_s and fps must be positive");
  }
  return meta;
}

std::string dump_line(const Json& j) { return j.dump(); }

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace emolysis
