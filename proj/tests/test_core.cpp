#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "emolysis/core.hpp"
#include "emolysis/error.hpp"
#include "emolysis/serialization.hpp"

using namespace emolysis;

namespace {

EmotionVector random_scores(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  EmotionVector v;
  for (int i = 0; i < kNumLabels; ++i) v[i] = u(rng);
  return v;
}

// Brute-force argmax over the 9-vector, lowest index on ties.
EmotionLabel argmax_oracle(const EmotionVector& v) {
  int best = 0;
  for (int i = 1; i < kNumLabels; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<EmotionLabel>(best);
}

}  // namespace

TEST(Labels, CanonicalOrderIsFixed) {
  const std::array<const char*, 9> expected{"joy",     "trust",        "fear",  "surprise", "sadness",
                                            "anticipation", "anger", "disgust",  "none"};
  ASSERT_EQ(kNumLabels, 9);
  for (int i = 0; i < kNumLabels; ++i) {
    EXPECT_EQ(kLabelNames[i], expected[i]);
    EXPECT_EQ(static_cast<int>(parse_label(expected[i])), i);
  }
  EXPECT_THROW(parse_label("contempt"), ValidationError);
}

TEST(ClampDistribution, IdentityOnValidInput) {
  const std::array<double, 9> raw{0, 0, 0, 0, 0, 0, 0, 0, 1};
  const auto d = clamp_distribution(raw);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(d.scores()[i], raw[i]);
}

TEST(ClampDistribution, ClampsBothBounds) {
  const std::array<double, 9> raw{1.2, -0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  const auto d = clamp_distribution(raw);
  EXPECT_EQ(d[EmotionLabel::joy], 1.0);
  EXPECT_EQ(d[EmotionLabel::trust], 0.0);
  for (int i = 2; i < 9; ++i) EXPECT_EQ(d.scores()[i], 0.5);
}

TEST(ClampDistribution, RejectsNonFiniteNamingTheIndex) {
  std::array<double, 9> raw{};
  raw[4] = std::nan("");
  try {
    clamp_distribution(raw);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find('4'), std::string::npos) << e.what();
  }
  raw[4] = INFINITY;
  EXPECT_THROW(clamp_distribution(raw), ValidationError);
}

TEST(ClampDistribution, ElementwiseUnderPermutation) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    EmotionVector v = random_scores(rng, -0.5, 1.5);
    std::array<int, 9> perm{0, 1, 2, 3, 4, 5, 6, 7, 8};
    std::shuffle(perm.begin(), perm.end(), rng);
    EmotionVector pv;
    for (int i = 0; i < 9; ++i) pv[i] = v[perm[i]];
    const auto a = clamp_distribution(v);
    const auto b = clamp_distribution(pv);
    for (int i = 0; i < 9; ++i) EXPECT_EQ(b.scores()[i], a.scores()[perm[i]]);
  }
}

TEST(ClampDistribution, Idempotent) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto once = clamp_distribution(random_scores(rng, -2.0, 2.0));
    const auto twice = clamp_distribution(once.scores());
    EXPECT_EQ(once, twice);
  }
}

TEST(EmotionDistribution, RejectsOutOfRangeScores) {
  EmotionVector v = EmotionVector::Zero();
  v[0] = 1.0000001;
  EXPECT_THROW(EmotionDistribution{v}, ValidationError);
  v[0] = -1e-12;
  EXPECT_THROW(EmotionDistribution{v}, ValidationError);
  EXPECT_EQ(EmotionDistribution::none_only()[EmotionLabel::none], 1.0);
  EXPECT_EQ(EmotionDistribution::none_only().scores().head<8>().sum(), 0.0);
}

TEST(DominantLabels, Examples) {
  EmotionVector v = EmotionVector::Zero();
  v[0] = 0.9;
  EXPECT_EQ(dominant_labels(EmotionDistribution(v), 0.5), std::vector{EmotionLabel::joy});

  v = EmotionVector::Zero();
  v[static_cast<int>(EmotionLabel::joy)] = 0.6;
  v[static_cast<int>(EmotionLabel::anger)] = 0.6;
  EXPECT_EQ(dominant_labels(EmotionDistribution(v), 0.5),
            (std::vector{EmotionLabel::joy, EmotionLabel::anger}));
}

TEST(DominantLabels, FallbackMatchesBruteForceArgmax) {
  const EmotionVector flat = EmotionVector::Constant(0.2);
  EXPECT_EQ(dominant_labels(EmotionDistribution(flat), 0.5), std::vector{argmax_oracle(flat)});
  EXPECT_EQ(argmax_oracle(flat), EmotionLabel::joy);
  EXPECT_TRUE(dominant_labels(EmotionDistribution(flat), 0.5, /*strict=*/true).empty());

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const EmotionVector v = random_scores(rng, 0.0, 0.49);
    EXPECT_EQ(dominant_labels(EmotionDistribution(v), 0.5), std::vector{argmax_oracle(v)});
  }
}

TEST(DominantLabels, MonotoneInThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(0.01, 0.99);
  for (int trial = 0; trial < 500; ++trial) {
    const EmotionDistribution d(random_scores(rng));
    double t1 = th(rng), t2 = th(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto low = dominant_labels(d, t1, true);
    const auto high = dominant_labels(d, t2, true);
    for (auto l : high) EXPECT_NE(std::find(low.begin(), low.end(), l), low.end());
  }
}

TEST(DominantLabels, ThresholdMustLieInOpenUnitInterval) {
  const EmotionDistribution d;
  EXPECT_THROW(dominant_labels(d, 0.0), ValidationError);
  EXPECT_THROW(dominant_labels(d, 1.0), ValidationError);
}

TEST(VAPoint, ClampsAtConstruction) {
  const VAPoint p(1.7, -3.0);
  EXPECT_EQ(p.valence(), 1.0);
  EXPECT_EQ(p.arousal(), -1.0);
  EXPECT_THROW(VAPoint(std::nan(""), 0.0), ValidationError);
}

TEST(TimeInterval, Invariants) {
  EXPECT_THROW(TimeInterval(1.0, 1.0), ValidationError);
  EXPECT_THROW(TimeInterval(2.0, 1.0), ValidationError);
  EXPECT_THROW(TimeInterval(-0.5, 1.0), ValidationError);
  EXPECT_THROW(TimeInterval(0.0, INFINITY), ValidationError);
  const TimeInterval i(1.0, 2.0);
  EXPECT_TRUE(i.contains(1.0));
  EXPECT_FALSE(i.contains(2.0));
}

TEST(Language, OnlyEnglishAndMandarin) {
  EXPECT_EQ(parse_language("en"), Language::en);
  EXPECT_EQ(parse_language("zh"), Language::zh);
  EXPECT_THROW(parse_language("de"), ValidationError);
  EXPECT_THROW(parse_language("fr"), ValidationError);
  EXPECT_THROW(parse_language(""), ValidationError);
}

TEST(ModalityObservation, PersonIdIffVisual) {
  const TimeInterval iv(0.0, 1.0);
  ModalityObservation visual{ModalityTag::visual, iv, 3, {}, {}, 1.0};
  EXPECT_NO_THROW(visual.validate());
  visual.person_id.reset();
  EXPECT_THROW(visual.validate(), ValidationError);
  ModalityObservation audio{ModalityTag::audio, iv, 3, {}, {}, 1.0};
  EXPECT_THROW(audio.validate(), ValidationError);
  audio.person_id.reset();
  EXPECT_NO_THROW(audio.validate());
  audio.confidence = 1.5;
  EXPECT_THROW(audio.validate(), ValidationError);
}

TEST(Serialization, EmotionAndVaSchemaIsBitExact) {
  EmotionVector v;
  v << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9;
  EXPECT_EQ(dump_line(to_json(EmotionDistribution(v))),
            R"({"joy":0.1,"trust":0.2,"fear":0.3,"surprise":0.4,"sadness":0.5,"anticipation":0.6,)"
            R"("anger":0.7,"disgust":0.8,"none":0.9})");
  EXPECT_EQ(dump_line(to_json(VAPoint(0.25, -0.5))), R"({"valence":0.25,"arousal":-0.5})");
}

TEST(Serialization, ObservationRoundTripProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = u(rng) * 100.0;
    const auto tag = kAllModalities[trial % 3];
    std::optional<PersonId> pid;
    if (tag == ModalityTag::visual) pid = static_cast<PersonId>(rng() % 50);
    const ModalityObservation o{tag, TimeInterval(a, a + 1e-3 + u(rng)), pid,
                                EmotionDistribution(random_scores(rng)), VAPoint(s(rng), s(rng)), u(rng)};
    const std::string line = dump_line(to_json(o));
    const ModalityObservation back = observation_from_json(parse_json(line));
    ASSERT_EQ(back, o) << line;
    EXPECT_EQ(dump_line(to_json(back)), line);
  }
}

TEST(Serialization, SessionMetaRoundTrip) {
  const SessionMeta m{"abc", 30.0, 25.0, true, Language::zh, SessionStatus::failed, "2026-01-01T00:00:00Z",
                      "boom"};
  EXPECT_EQ(meta_from_json(to_json(m)), m);
  Json j = to_json(m);
  j["language"] = "de";
  EXPECT_THROW(meta_from_json(j), ValidationError);
}

TEST(Serialization, MalformedInputIsValidationError) {
  EXPECT_THROW(parse_json("{"), ValidationError);
  EXPECT_THROW(emotions_from_json(Json{{"joy", 0.5}}), ValidationError);
  EXPECT_THROW(va_from_json(Json{{"valence", "x"}, {"arousal", 0.0}}), ValidationError);
}

TEST(Timestamp, IsoUtc) {
  const std::string ts = utc_timestamp_now();
  ASSERT_EQ(ts.size(), 20u) << ts;
  EXPECT_EQ(ts[4], '-');
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts.back(), 'Z');
}
