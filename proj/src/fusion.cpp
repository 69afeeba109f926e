#include "emolysis/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <set>
#include <tuple>

#include "emolysis/digest.hpp"

namespace emolysis::fusion {

Selection Selection::all() {
  return Selection{{}, {kAllModalities.begin(), kAllModalities.end()}};
}

Selection Selection::make(std::vector<PersonId> persons, std::vector<ModalityTag> modalities) {
  std::sort(persons.begin(), persons.end());
  persons.erase(std::unique(persons.begin(), persons.end()), persons.end());
  std::sort(modalities.begin(), modalities.end());
  modalities.erase(std::unique(modalities.begin(), modalities.end()), modalities.end());
  if (modalities.empty()) throw ValidationError("selection needs at least one modality");
  return Selection{std::move(persons), std::move(modalities)};
}

bool Selection::has(ModalityTag m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

bool Selection::includes(PersonId id) const {
  return persons.empty() || std::binary_search(persons.begin(), persons.end(), id);
}

Selection Selection::resolved(const std::vector<PersonId>& known) const {
  if (!persons.empty()) return *this;
  return make(known, modalities);
}

std::string Selection::canonical() const {
  std::string s = "persons=";
  if (persons.empty()) s += "*";
  for (std::size_t i = 0; i < persons.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(persons[i]);
  }
  s += ";modalities=";
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (i) s += ',';
    s += to_string(modalities[i]);
  }
  return s;
}

std::string Selection::digest() const { return to_hex(Fnv1a64().update(canonical()).value()); }

namespace {

std::vector<std::string_view> split_csv(std::string_view csv) {
  std::vector<std::string_view> out;
  while (!csv.empty()) {
    const auto comma = csv.find(',');
    auto item = csv.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    csv.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::vector<PersonId> parse_person_list(std::string_view csv) {
  std::vector<PersonId> out;
  for (auto item : split_csv(csv)) {
    PersonId id = -1;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), id);
    if (ec != std::errc{} || ptr != item.data() + item.size() || id < 0) {
      throw ValidationError("invalid person id '" + std::string(item) + "'");
    }
    out.push_back(id);
  }
  return out;
}

std::vector<ModalityTag> parse_modality_list(std::string_view csv) {
  std::vector<ModalityTag> out;
  for (auto item : split_csv(csv)) out.push_back(parse_modality(item));
  return out;
}

double FusionWeights::of(ModalityTag m) const {
  switch (m) {
    case ModalityTag::visual: return visual;
    case ModalityTag::audio: return audio;
    case ModalityTag::linguistic: return linguistic;
  }
  return 0.0;
}

void FusionWeights::validate() const {
  for (double w : {visual, audio, linguistic}) {
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("fusion weights must be finite and >= 0");
  }
  if (visual + audio + linguistic <= 0.0) throw ValidationError("at least one fusion weight must be > 0");
}

namespace {

// Weighted mean, clamped to the componentwise range of its inputs so rounding
// never takes it outside the convex hull.
Channel weighted_mean(std::span<const std::pair<const Channel*, double>> items) {
  Channel sum{EmotionVector::Zero(), Eigen::Vector2d::Zero()};
  Channel lo = *items.front().first;
  Channel hi = lo;
  double total = 0.0;
  for (const auto& [c, w] : items) {
    sum.emotions += w * c->emotions;
    sum.va += w * c->va;
    total += w;
    lo.emotions = lo.emotions.cwiseMin(c->emotions);
    hi.emotions = hi.emotions.cwiseMax(c->emotions);
    lo.va = lo.va.cwiseMin(c->va);
    hi.va = hi.va.cwiseMax(c->va);
  }
  Channel mean{sum.emotions / total, sum.va / total};
  mean.emotions = mean.emotions.cwiseMax(lo.emotions).cwiseMin(hi.emotions);
  mean.va = mean.va.cwiseMax(lo.va).cwiseMin(hi.va);
  return mean;
}

Channel to_channel(const ModalityObservation& o) {
  return {o.emotions.scores(), o.va.vector()};
}

struct Accumulator {
  std::vector<std::vector<Channel>> per_tick;

  explicit Accumulator(std::int64_t ticks) : per_tick(static_cast<std::size_t>(ticks)) {}

  std::vector<std::optional<Channel>> finish() const {
    std::vector<std::optional<Channel>> out(per_tick.size());
    std::vector<std::pair<const Channel*, double>> items;
    for (std::size_t k = 0; k < per_tick.size(); ++k) {
      if (per_tick[k].empty()) continue;
      items.clear();
      for (const auto& c : per_tick[k]) items.emplace_back(&c, 1.0);
      out[k] = weighted_mean(items);
    }
    return out;
  }
};

}  // namespace

void canonical_sort(std::vector<ModalityObservation>& observations) {
  auto key = [](const ModalityObservation& o) {
    return std::tuple(o.modality, o.person_id.value_or(-1), o.interval.start_s(), o.interval.end_s());
  };
  std::stable_sort(observations.begin(), observations.end(),
                   [&](const ModalityObservation& a, const ModalityObservation& b) {
                     const auto ka = key(a);
                     const auto kb = key(b);
                     if (ka != kb) return ka < kb;
                     const auto& ea = a.emotions.scores();
                     const auto& eb = b.emotions.scores();
                     return std::lexicographical_compare(ea.data(), ea.data() + kNumLabels, eb.data(),
                                                         eb.data() + kNumLabels);
                   });
}

Resampled resample(std::span<const ModalityObservation> observations, const TickGrid& grid) {
  std::vector<ModalityObservation> sorted(observations.begin(), observations.end());
  canonical_sort(sorted);

  std::map<PersonId, Accumulator> visual;
  Accumulator audio(grid.count());
  Accumulator linguistic(grid.count());
  for (const auto& o : sorted) {
    Accumulator* acc = nullptr;
    switch (o.modality) {
      case ModalityTag::visual:
        acc = &visual.try_emplace(o.person_id.value_or(0), grid.count()).first->second;
        break;
      case ModalityTag::audio: acc = &audio; break;
      case ModalityTag::linguistic: acc = &linguistic; break;
    }
    const TickRange range = to_tick(o.interval, grid);
    for (std::int64_t k = range.first; k < range.last; ++k) {
      acc->per_tick[static_cast<std::size_t>(k)].push_back(to_channel(o));
    }
  }

  Resampled out;
  for (const auto& [id, acc] : visual) out.visual.emplace(id, acc.finish());
  out.audio = audio.finish();
  out.linguistic = linguistic.finish();
  return out;
}

Json to_json(const TickRecord& record) {
  Json modalities = Json::array();
  for (auto m : record.group.modalities) modalities.push_back(to_string(m));
  Json persons = Json::object();
  for (const auto& [id, value] : record.persons) {
    Json p = Json::object();
    if (value) {
      p["emotions"] = to_json(value->emotions);
      p["va"] = to_json(value->va);
    } else {
      p["emotions"] = nullptr;
      p["va"] = nullptr;
    }
    p["present"] = value.has_value();
    persons[std::to_string(id)] = std::move(p);
  }
  return Json{{"tick", record.tick},
              {"t", record.t},
              {"group",
               {{"emotions", to_json(record.group.emotions)},
                {"va", to_json(record.group.va)},
                {"modalities", std::move(modalities)}}},
              {"persons", std::move(persons)}};
}

std::string to_jsonl(std::span<const TickRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += dump_line(to_json(r));
    out += '\n';
  }
  return out;
}

Timeline::Timeline(double duration_s, double tick_s, std::vector<ModalityObservation> observations,
                   std::vector<PersonId> persons, FusionWeights weights)
    : grid_(duration_s, tick_s), observations_(std::move(observations)), weights_(weights) {
  weights_.validate();
  std::set<PersonId> ids(persons.begin(), persons.end());
  for (const auto& o : observations_) {
    o.validate();
    if (o.person_id) ids.insert(*o.person_id);
  }
  persons_.assign(ids.begin(), ids.end());
  canonical_sort(observations_);
  resampled_ = resample(observations_, grid_);
}

Timeline Timeline::for_session(const SessionMeta& meta, double tick_s,
                               std::vector<ModalityObservation> observations,
                               std::vector<PersonId> persons, FusionWeights weights) {
  if (meta.status != SessionStatus::done) {
    throw StateError("session '" + meta.session_id + "' is " + std::string(to_string(meta.status)) +
                     ", timelines need a finished session");
  }
  return Timeline(meta.duration_s, tick_s, std::move(observations), std::move(persons), weights);
}

void Timeline::validate(const Selection& selection) const {
  if (selection.modalities.empty()) throw ValidationError("selection needs at least one modality");
  std::string unknown;
  for (auto id : selection.persons) {
    if (!std::binary_search(persons_.begin(), persons_.end(), id)) {
      if (!unknown.empty()) unknown += ',';
      unknown += std::to_string(id);
    }
  }
  if (!unknown.empty()) throw ValidationError("unknown person ids: " + unknown);
}

const std::optional<Channel>& Timeline::person_channel(PersonId person, std::int64_t tick) const {
  static const std::optional<Channel> kAbsent;
  const auto it = resampled_.visual.find(person);
  if (it == resampled_.visual.end()) return kAbsent;
  return it->second[static_cast<std::size_t>(tick)];
}

std::optional<PersonValue> Timeline::fuse_person(std::int64_t tick, PersonId person,
                                                 const Selection& selection) const {
  if (!selection.has(ModalityTag::visual)) {
    throw ValidationError("per-person values need the visual modality in the selection");
  }
  if (!std::binary_search(persons_.begin(), persons_.end(), person)) {
    throw ValidationError("unknown person id " + std::to_string(person));
  }
  if (tick < 0 || tick >= grid_.count()) throw ValidationError("tick out of range");
  const auto& c = person_channel(person, tick);
  if (!c) return std::nullopt;
  return PersonValue{EmotionDistribution(c->emotions), VAPoint(c->va[0], c->va[1])};
}

GroupValue Timeline::fuse_group(std::int64_t tick, const Selection& selection) const {
  if (tick < 0 || tick >= grid_.count()) throw ValidationError("tick out of range");
  const auto k = static_cast<std::size_t>(tick);

  std::array<std::optional<Channel>, kNumModalities> channels;
  if (selection.has(ModalityTag::visual)) {
    std::vector<std::pair<const Channel*, double>> members;
    for (auto id : persons_) {
      if (!selection.includes(id)) continue;
      const auto& c = person_channel(id, tick);
      if (c) members.emplace_back(&*c, 1.0);
    }
    if (!members.empty()) channels[0] = weighted_mean(members);
  }
  if (selection.has(ModalityTag::audio)) channels[1] = resampled_.audio[k];
  if (selection.has(ModalityTag::linguistic)) channels[2] = resampled_.linguistic[k];

  GroupValue g;
  std::vector<std::pair<const Channel*, double>> items;
  for (int m = 0; m < kNumModalities; ++m) {
    const double w = weights_.of(kAllModalities[m]);
    if (!channels[m] || w <= 0.0) continue;
    items.emplace_back(&*channels[m], w);
    g.modalities.push_back(kAllModalities[m]);
  }
  if (items.empty()) {
    g.emotions = EmotionDistribution::none_only();
    g.va = VAPoint(0.0, 0.0);
    return g;
  }
  const Channel mean = weighted_mean(items);
  g.emotions = EmotionDistribution(mean.emotions);
  g.va = VAPoint(mean.va[0], mean.va[1]);
  return g;
}

TickRecord Timeline::record(std::int64_t tick, const Selection& selection) const {
  TickRecord r;
  r.tick = tick;
  r.t = grid_.start(tick);
  r.group = fuse_group(tick, selection);
  if (selection.has(ModalityTag::visual)) {
    for (auto id : persons_) {
      if (selection.includes(id)) r.persons.emplace(id, fuse_person(tick, id, selection));
    }
  }
  return r;
}

std::vector<TickRecord> Timeline::build(const Selection& selection) const {
  return build(selection, 0.0, grid_.duration_s());
}

std::pair<std::int64_t, std::int64_t> Timeline::tick_span(double from_s, double to_s) const {
  if (!std::isfinite(from_s) || !std::isfinite(to_s)) throw ValidationError("range must be finite");
  from_s = std::clamp(from_s, 0.0, grid_.duration_s());
  to_s = std::clamp(to_s, 0.0, grid_.duration_s());
  std::int64_t first = grid_.count();
  std::int64_t last = first;
  for (std::int64_t k = 0; k < grid_.count(); ++k) {
    const double start = grid_.start(k);
    if (start < to_s && start + grid_.tick_s() > from_s) {
      if (first == grid_.count()) first = k;
      last = k + 1;
    }
  }
  return {first, last};
}

std::vector<TickRecord> Timeline::build(const Selection& selection, double from_s, double to_s) const {
  validate(selection);
  const auto [first, last] = tick_span(from_s, to_s);
  std::vector<TickRecord> out;
  for (std::int64_t k = first; k < last; ++k) out.push_back(record(k, selection));
  return out;
}

}  // namespace emolysis::fusion
