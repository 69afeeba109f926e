#pragma once

#include "json.hpp"

#include "emolysis/core.hpp"

namespace emolysis {

// Insertion-ordered so field order follows the documented schemas and output is
// byte-stable.
using Json = nlohmann::ordered_json;

Json to_json(const EmotionDistribution& d);
Json to_json(const VAPoint& va);
Json to_json(const TimeInterval& interval);
Json to_json(const ModalityObservation& obs);
Json to_json(const SessionMeta& meta);

// Decoders throw ValidationError on missing fields, wrong types or violated
// invariants.
EmotionDistribution emotions_from_json(const Json& j);
VAPoint va_from_json(const Json& j);
TimeInterval interval_from_json(const Json& j);
ModalityObservation observation_from_json(const Json& j);
SessionMeta meta_from_json(const Json& j);

/// Compact single-line dump; doubles round-trip exactly.
std::string dump_line(const Json& j);

/// Parses one JSON document, converting parse failures into ValidationError.
Json parse_json(std::string_view text);

}  // namespace emolysis
