#include "emolysis/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "emolysis/digest.hpp"

namespace emolysis::backends {

bool BackendDescriptor::supports(Language language) const {
  return std::find(languages.begin(), languages.end(), language) != languages.end();
}

Json to_json(const BackendDescriptor& d) {
  Json langs = Json::array();
  for (auto l : d.languages) langs.push_back(to_string(l));
  return Json{{"name", d.name},
              {"modality", to_string(d.modality)},
              {"native_label_space", d.native_label_space},
              {"languages", std::move(langs)},
              {"version", d.version},
              {"va_convention", d.va_convention},
              {"max_concurrent_requests", d.max_concurrent_requests}};
}

namespace {

void require_modality(const BackendDescriptor& d, ModalityTag expected) {
  if (d.modality != expected) {
    throw ValidationError("backend '" + d.name + "' serves " + std::string(to_string(d.modality)) +
                          ", not " + std::string(to_string(expected)));
  }
}

template <typename Call>
Prediction checked(const BackendDescriptor& d, const labels::LabelMapRegistry& registry, Call&& call) {
  RawPrediction raw;
  try {
    raw = call();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModalityUnavailable("backend '" + d.name + "' failed: " + e.what());
  }
  const auto& space = registry.space(d.native_label_space);
  if (raw.scores.size() != space.arity()) {
    throw ModalityUnavailable("backend '" + d.name + "' returned " + std::to_string(raw.scores.size()) +
                              " scores, label space '" + space.id + "' has " +
                              std::to_string(space.arity()));
  }
  if (!raw.scores.allFinite() || !std::isfinite(raw.valence) || !std::isfinite(raw.arousal) ||
      !std::isfinite(raw.confidence)) {
    throw ModalityUnavailable("backend '" + d.name + "' returned non-finite values");
  }
  Prediction p;
  p.native = std::move(raw.scores);
  p.va = registry.map_va(raw.valence, raw.arousal, d.va_convention);
  p.confidence = std::clamp(raw.confidence, 0.0, 1.0);
  p.emotions = registry.map_scores(p.native, d.native_label_space);
  return p;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

Prediction infer_visual(const VisualBackend& backend, const Image& crop,
                        const labels::LabelMapRegistry& registry) {
  const auto& d = backend.descriptor();
  require_modality(d, ModalityTag::visual);
  if (crop.width != tracking::kCropSize || crop.height != tracking::kCropSize ||
      crop.rgb.size() != static_cast<std::size_t>(crop.width) * crop.height * 3) {
    throw ValidationError("visual backends take 224x224 RGB crops");
  }
  return checked(d, registry, [&] { return backend.predict(crop); });
}

Prediction infer_audio(const AudioBackend& backend, const AudioClip& clip,
                       const labels::LabelMapRegistry& registry) {
  const auto& d = backend.descriptor();
  require_modality(d, ModalityTag::audio);
  if (clip.samples.empty()) throw ValidationError("audio clip has no samples");
  if (clip.sample_rate_hz <= 0) throw ValidationError("audio clip has no sample rate");
  return checked(d, registry, [&] { return backend.predict(clip); });
}

Prediction infer_text(const TextBackend& backend, const TranscriptSegment& segment,
                      const labels::LabelMapRegistry& registry) {
  const auto& d = backend.descriptor();
  require_modality(d, ModalityTag::linguistic);
  if (is_blank(segment.text)) throw ValidationError("transcript segment text is empty");
  if (!d.supports(segment.language)) {
    throw ValidationError("backend '" + d.name + "' does not serve language " +
                          std::string(to_string(segment.language)));
  }
  return checked(d, registry, [&] { return backend.predict(segment); });
}

std::vector<TranscriptSegment> transcribe(const Transcriber& transcriber, const AudioClip& clip,
                                          Language language) {
  std::vector<TranscriptSegment> segs;
  try {
    segs = transcriber.segments(clip, language);
  } catch (const std::exception& e) {
    throw ModalityUnavailable("transcriber '" + transcriber.name() + "' failed: " + e.what());
  }
  double cursor = clip.interval.start_s();
  for (const auto& s : segs) {
    if (s.interval.start_s() < cursor || s.interval.end_s() > clip.interval.end_s()) {
      throw ModalityUnavailable("transcriber '" + transcriber.name() +
                                "' returned overlapping or out-of-clip segments");
    }
    if (is_blank(s.text) || s.language != language) {
      throw ModalityUnavailable("transcriber '" + transcriber.name() + "' returned an invalid segment");
    }
    cursor = s.interval.end_s();
  }
  return segs;
}

std::vector<TranscriptSegment> transcribe(const Transcriber& transcriber, const AudioClip& clip,
                                          std::string_view language) {
  return transcribe(transcriber, clip, parse_language(language));
}

const TextBackend* route_text(const std::vector<std::shared_ptr<const TextBackend>>& backends,
                              Language language) {
  for (const auto& b : backends) {
    if (b && b->descriptor().supports(language)) return b.get();
  }
  return nullptr;
}

// --- reference backends ---------------------------------------------------

RawPrediction expand_digest(std::uint64_t digest, Eigen::Index arity) {
  std::uint64_t state = digest;
  RawPrediction p;
  p.scores.resize(arity);
  for (Eigen::Index i = 0; i < arity; ++i) p.scores[i] = unit_from_bits(splitmix64(state));
  p.valence = 2.0 * unit_from_bits(splitmix64(state)) - 1.0;
  p.arousal = 2.0 * unit_from_bits(splitmix64(state)) - 1.0;
  p.confidence = 1.0;
  return p;
}

std::uint64_t digest_image(std::string_view version, const Image& image) {
  Fnv1a64 h;
  h.update(version).update("visual");
  h.update_u64(static_cast<std::uint64_t>(image.width)).update_u64(static_cast<std::uint64_t>(image.height));
  h.update(image.rgb);
  return h.value();
}

namespace {

std::int16_t quantize(float x) {
  return static_cast<std::int16_t>(std::lround(std::clamp(static_cast<double>(x), -1.0, 1.0) * 32767.0));
}

}  // namespace

std::uint64_t digest_audio(std::string_view version, const AudioClip& clip) {
  Fnv1a64 h;
  h.update(version).update("audio");
  h.update_u64(static_cast<std::uint64_t>(clip.sample_rate_hz));
  std::vector<std::uint8_t> pcm(clip.samples.size() * 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const auto q = static_cast<std::uint16_t>(quantize(clip.samples[i]));
    pcm[2 * i] = static_cast<std::uint8_t>(q & 0xFF);
    pcm[2 * i + 1] = static_cast<std::uint8_t>(q >> 8);
  }
  h.update(pcm);
  return h.value();
}

std::uint64_t digest_text(std::string_view version, const TranscriptSegment& segment) {
  Fnv1a64 h;
  h.update(version).update("text").update(to_string(segment.language)).update(segment.text);
  return h.value();
}

ReferenceVisual::ReferenceVisual()
    : descriptor_{.name = "reference",
                  .modality = ModalityTag::visual,
                  .native_label_space = labels::kAffectNet8,
                  .languages = {},
                  .version = std::string(kReferenceVersion)} {}

RawPrediction ReferenceVisual::predict(const Image& crop) const {
  return expand_digest(digest_image(descriptor_.version, crop), 8);
}

ReferenceAudio::ReferenceAudio()
    : descriptor_{.name = "reference",
                  .modality = ModalityTag::audio,
                  .native_label_space = labels::kPlutchik9,
                  .languages = {},
                  .version = std::string(kReferenceVersion)} {}

RawPrediction ReferenceAudio::predict(const AudioClip& clip) const {
  return expand_digest(digest_audio(descriptor_.version, clip), kNumLabels);
}

ReferenceText::ReferenceText(Language language)
    : descriptor_{.name = std::string("reference-") + std::string(to_string(language)),
                  .modality = ModalityTag::linguistic,
                  .native_label_space = language == Language::en ? labels::kMosei6 : labels::kPlutchik9,
                  .languages = {language},
                  .version = std::string(kReferenceVersion)} {}

RawPrediction ReferenceText::predict(const TranscriptSegment& segment) const {
  const Eigen::Index arity = descriptor_.native_label_space == labels::kMosei6 ? 6 : kNumLabels;
  return expand_digest(digest_text(descriptor_.version, segment), arity);
}

std::vector<TranscriptSegment> ReferenceTranscriber::segments(const AudioClip& clip,
                                                              Language language) const {
  const bool silent = std::all_of(clip.samples.begin(), clip.samples.end(),
                                  [](float x) { return quantize(x) == 0; });
  if (silent) return {};
  const std::string tag = to_hex(digest_audio(kReferenceVersion, clip));
  std::string text = language == Language::en ? "reference transcript " + tag
                                              : "\xE5\x8F\x82\xE8\x80\x83\xE8\xBD\xAC\xE5\x86\x99 " + tag;
  return {TranscriptSegment{clip.interval, std::move(text), language}};
}

// --- registry -------------------------------------------------------------

std::vector<BackendDescriptor> BackendSet::descriptors() const {
  std::vector<BackendDescriptor> out;
  if (visual) out.push_back(visual->descriptor());
  if (audio) out.push_back(audio->descriptor());
  for (const auto& t : linguistic.text) {
    if (t) out.push_back(t->descriptor());
  }
  return out;
}

void BackendSet::check(const labels::LabelMapRegistry& registry) const {
  for (const auto& d : descriptors()) {
    if (!registry.contains(d.native_label_space)) {
      throw BackendError("backend '" + d.name + "' uses unregistered label space '" +
                         d.native_label_space + "'");
    }
    if (!registry.has_convention(d.va_convention)) {
      throw BackendError("backend '" + d.name + "' uses unregistered VA convention '" +
                         d.va_convention + "'");
    }
  }
}

void BackendRegistry::add_detector(const std::string& name, DetectorFactory f) {
  detectors_[name] = std::move(f);
}
void BackendRegistry::add_visual(const std::string& name, VisualFactory f) { visual_[name] = std::move(f); }
void BackendRegistry::add_audio(const std::string& name, AudioFactory f) { audio_[name] = std::move(f); }
void BackendRegistry::add_linguistic(const std::string& name, LinguisticFactory f) {
  linguistic_[name] = std::move(f);
}

namespace {

template <typename Map>
auto build(const Map& factories, const std::string& name, std::string_view what) {
  using Result = decltype(factories.begin()->second());
  if (name == "none") return Result{};
  const auto it = factories.find(name);
  if (it == factories.end()) {
    throw BackendError("unknown " + std::string(what) + " plugin '" + name + "'");
  }
  return it->second();
}

}  // namespace

BackendSet BackendRegistry::make(const BackendSelection& selection) const {
  BackendSet set;
  set.detector = build(detectors_, selection.detector, "detector");
  set.visual = build(visual_, selection.visual, "visual");
  set.audio = build(audio_, selection.audio, "audio");
  set.linguistic = build(linguistic_, selection.linguistic, "linguistic");
  return set;
}

std::vector<std::string> BackendRegistry::names(ModalityTag modality) const {
  std::vector<std::string> out;
  auto collect = [&](const auto& m) {
    for (const auto& [k, v] : m) out.push_back(k);
  };
  switch (modality) {
    case ModalityTag::visual: collect(visual_); break;
    case ModalityTag::audio: collect(audio_); break;
    case ModalityTag::linguistic: collect(linguistic_); break;
  }
  return out;
}

BackendRegistry BackendRegistry::with_reference() {
  BackendRegistry r;
  r.add_detector("marker", [] { return std::make_shared<const tracking::MarkerDetector>(); });
  r.add_visual("reference", [] { return std::make_shared<const ReferenceVisual>(); });
  r.add_audio("reference", [] { return std::make_shared<const ReferenceAudio>(); });
  r.add_linguistic("reference", [] {
    return LinguisticStack{std::make_shared<const ReferenceTranscriber>(),
                           {std::make_shared<const ReferenceText>(Language::en),
                            std::make_shared<const ReferenceText>(Language::zh)}};
  });
  return r;
}

}  // namespace emolysis::backends
