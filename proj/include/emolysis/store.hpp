#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emolysis/core.hpp"
#include "emolysis/pipeline.hpp"
#include "emolysis/serialization.hpp"
#include "emolysis/tracking.hpp"

namespace emolysis {

/// Per-stage completion fractions, indexed by Stage.
using StageFractions = std::array<double, kAllStages.size()>;

Json to_json(const StageFractions& fractions);

/// Contents of a session's meta.json.
struct StoredSession {
  SessionMeta meta;
  StageFractions progress{};
  Json config = Json::object();  // the AnalysisConfig the session ran with
};

Json to_json(const StoredSession& s);
StoredSession stored_session_from_json(const Json& j);

/// File-backed session store. Layout per session directory:
///   meta.json           written atomically (temp file + rename)
///   tracks.jsonl        one PersonTrack per line
///   observations.jsonl  append-only while processing
///   cache/<digest>.jsonl full-range timeline per selection digest
/// Nothing else is ever written; uploaded media never touches the store.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path dir(const std::string& id) const;
  bool exists(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Creates the session directory with its first meta.json in one rename;
  /// a crash never leaves a directory without metadata.
  void create(const StoredSession& session);
  void write_meta(const StoredSession& session);
  StoredSession read_meta(const std::string& id) const;

  void append_observations(const std::string& id, std::span<const ModalityObservation> observations);
  std::vector<ModalityObservation> read_observations(const std::string& id) const;

  void write_tracks(const std::string& id, std::span<const tracking::PersonTrack> tracks);
  std::vector<tracking::PersonTrack> read_tracks(const std::string& id) const;

  std::optional<std::string> read_cache(const std::string& id, const std::string& digest) const;
  void write_cache(const std::string& id, const std::string& digest, const std::string& body);

  /// Marks every queued or processing session failed and removes leftovers of
  /// interrupted creates. Returns the ids that were marked failed.
  std::vector<std::string> recover(std::string_view reason = "interrupted before completion");

 private:
  std::filesystem::path root_;
};

/// Writes `data` to `path` through a sibling temp file and rename.
void write_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace emolysis
