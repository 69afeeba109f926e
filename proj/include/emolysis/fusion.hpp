#pragma once

#include <Eigen/Core>

#include <array>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "emolysis/core.hpp"
#include "emolysis/serialization.hpp"
#include "emolysis/windowing.hpp"

namespace emolysis::fusion {

/// Person subset (empty: everyone) and a non-empty modality subset.
struct Selection {
  std::vector<PersonId> persons;        // sorted, unique
  std::vector<ModalityTag> modalities;  // canonical order, non-empty

  static Selection all();
  /// Sorts and de-duplicates; throws ValidationError for an empty modality set.
  static Selection make(std::vector<PersonId> persons, std::vector<ModalityTag> modalities);

  bool has(ModalityTag m) const;
  bool includes(PersonId id) const;  // true for every id when `persons` is empty

  /// Same selection with an empty person set spelled out as `known`.
  Selection resolved(const std::vector<PersonId>& known) const;

  /// "persons=0,1;modalities=visual,audio"
  std::string canonical() const;
  std::string digest() const;

  friend bool operator==(const Selection&, const Selection&) = default;
};

/// Parses the comma-separated forms used by the HTTP query and CLI flags.
std::vector<PersonId> parse_person_list(std::string_view csv);
std::vector<ModalityTag> parse_modality_list(std::string_view csv);

/// Relative modality weights for the group mean; equal by default.
struct FusionWeights {
  double visual = 1.0;
  double audio = 1.0;
  double linguistic = 1.0;

  double of(ModalityTag m) const;
  void validate() const;
};

/// Emotion scores and valence/arousal carried together through fusion.
struct Channel {
  EmotionVector emotions;
  Eigen::Vector2d va;
};

/// Per-tick values for every modality; absent ticks are nullopt.
struct Resampled {
  std::map<PersonId, std::vector<std::optional<Channel>>> visual;
  std::vector<std::optional<Channel>> audio;
  std::vector<std::optional<Channel>> linguistic;
};

/// Sorts observations into the order every fusion path sums them in.
void canonical_sort(std::vector<ModalityObservation>& observations);

/// Tick value per modality = mean of that modality's observations whose
/// interval contains the tick midpoint (visual separately per person).
Resampled resample(std::span<const ModalityObservation> observations, const TickGrid& grid);

struct PersonValue {
  EmotionDistribution emotions;
  VAPoint va;
};

struct GroupValue {
  EmotionDistribution emotions;
  VAPoint va;
  std::vector<ModalityTag> modalities;  // contributing channels, canonical order
};

struct TickRecord {
  std::int64_t tick = 0;
  double t = 0.0;
  GroupValue group;
  std::map<PersonId, std::optional<PersonValue>> persons;  // nullopt: not visible
};

Json to_json(const TickRecord& record);
/// One compact JSON object per line, each terminated by '\n'.
std::string to_jsonl(std::span<const TickRecord> records);

/// Immutable fused view over one session's stored observations.
class Timeline {
 public:
  Timeline(double duration_s, double tick_s, std::vector<ModalityObservation> observations,
           std::vector<PersonId> persons, FusionWeights weights = {});

  /// Throws StateError unless the session has finished processing.
  static Timeline for_session(const SessionMeta& meta, double tick_s,
                              std::vector<ModalityObservation> observations,
                              std::vector<PersonId> persons, FusionWeights weights = {});

  const TickGrid& grid() const noexcept { return grid_; }
  const std::vector<PersonId>& persons() const noexcept { return persons_; }
  const Resampled& resampled() const noexcept { return resampled_; }
  const std::vector<ModalityObservation>& observations() const noexcept { return observations_; }

  /// Throws ValidationError listing person ids the session does not know.
  void validate(const Selection& selection) const;

  /// Visual value of one person at `tick`; nullopt when not visible. Requires
  /// visual in the selection.
  std::optional<PersonValue> fuse_person(std::int64_t tick, PersonId person,
                                         const Selection& selection) const;
  GroupValue fuse_group(std::int64_t tick, const Selection& selection) const;
  TickRecord record(std::int64_t tick, const Selection& selection) const;

  std::vector<TickRecord> build(const Selection& selection) const;
  /// Ticks overlapping [from_s, to_s); the range is clamped to the media.
  std::vector<TickRecord> build(const Selection& selection, double from_s, double to_s) const;
  /// Half-open tick index range [first, last) that build(from_s, to_s) emits.
  std::pair<std::int64_t, std::int64_t> tick_span(double from_s, double to_s) const;

 private:
  const std::optional<Channel>& person_channel(PersonId person, std::int64_t tick) const;

  TickGrid grid_;
  std::vector<ModalityObservation> observations_;
  std::vector<PersonId> persons_;
  FusionWeights weights_;
  Resampled resampled_;
};

}  // namespace emolysis::fusion
