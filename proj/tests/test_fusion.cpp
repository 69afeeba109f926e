#include <gtest/gtest.h>

#include <random>
#include <set>

#include "emolysis/fusion.hpp"
#include "oracles.hpp"

using namespace emolysis;
using namespace emolysis::fusion;

namespace {

ModalityObservation obs(ModalityTag m, double a, double b, std::optional<PersonId> p, double joy,
                        double valence = 0.0) {
  EmotionVector e = EmotionVector::Zero();
  e[0] = joy;
  return {m, TimeInterval(a, b), p, EmotionDistribution(e), VAPoint(valence, 0.0), 1.0};
}

const std::vector<ModalityTag> kVisualOnly{ModalityTag::visual};
const std::vector<ModalityTag> kAll(kAllModalities.begin(), kAllModalities.end());

Selection random_selection(std::mt19937_64& rng, const std::vector<PersonId>& known) {
  std::vector<PersonId> persons;
  for (auto id : known) {
    if (rng() % 3 != 0) persons.push_back(id);
  }
  if (persons.size() == known.size() && rng() % 2) persons.clear();  // "everyone"
  std::vector<ModalityTag> mods;
  while (mods.empty()) {
    for (auto m : kAllModalities) {
      if (rng() % 2) mods.push_back(m);
    }
  }
  return Selection::make(persons, mods);
}

}  // namespace

TEST(Selection, CanonicalFormAndDigest) {
  const auto a = Selection::make({3, 1, 3}, {ModalityTag::audio, ModalityTag::visual});
  EXPECT_EQ(a.persons, (std::vector<PersonId>{1, 3}));
  EXPECT_EQ(a.canonical(), "persons=1,3;modalities=visual,audio");
  const auto b = Selection::make({1, 3}, {ModalityTag::visual, ModalityTag::audio});
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_NE(a.digest(), Selection::make({1}, {ModalityTag::visual, ModalityTag::audio}).digest());
  EXPECT_NE(Selection::all().digest(), Selection::all().resolved({0, 1}).digest());
  EXPECT_THROW(Selection::make({}, {}), ValidationError);
}

TEST(Selection, ParsesCommaLists) {
  EXPECT_EQ(parse_person_list(""), std::vector<PersonId>{});
  EXPECT_EQ(parse_person_list("2,0"), (std::vector<PersonId>{2, 0}));
  EXPECT_THROW(parse_person_list("1,x"), ValidationError);
  EXPECT_THROW(parse_person_list("-1"), ValidationError);
  EXPECT_EQ(parse_modality_list("audio,visual"), (std::vector<ModalityTag>{ModalityTag::audio, ModalityTag::visual}));
  EXPECT_THROW(parse_modality_list("smell"), ValidationError);
}

TEST(Resample, SingleObservationCoversItsTicks) {
  const TickGrid grid(30.0);
  const std::vector<ModalityObservation> o{obs(ModalityTag::audio, 0, 15, std::nullopt, 0.7)};
  const auto r = resample(o, grid);
  ASSERT_TRUE(r.audio[10]);
  EXPECT_EQ(r.audio[10]->emotions[0], 0.7);
  EXPECT_FALSE(r.audio[60]);
  EXPECT_FALSE(r.audio[119]);
}

TEST(Resample, OverlappingWindowsAverage) {
  const TickGrid grid(30.0);
  const std::vector<ModalityObservation> o{obs(ModalityTag::audio, 0, 15, std::nullopt, 0.2, -0.4),
                                           obs(ModalityTag::audio, 7.5, 22.5, std::nullopt, 0.8, 0.6)};
  const auto r = resample(o, grid);
  ASSERT_TRUE(r.audio[40]);  // t = 10.125
  EXPECT_NEAR(r.audio[40]->emotions[0], (0.2 + 0.8) / 2, 1e-15);
  EXPECT_NEAR(r.audio[40]->va[0], (-0.4 + 0.6) / 2, 1e-15);
  EXPECT_EQ(r.audio[20]->emotions[0], 0.2);
  EXPECT_EQ(r.audio[70]->emotions[0], 0.8);
  EXPECT_FALSE(r.audio[95]);
}

TEST(FuseGroup, TwoPersonsVisualOnly) {
  const Timeline tl(2.0, 0.25, {obs(ModalityTag::visual, 0, 2, 0, 0.2), obs(ModalityTag::visual, 0, 2, 1, 0.6)}, {});
  const auto g = tl.fuse_group(3, Selection::make({}, kVisualOnly));
  EXPECT_NEAR(g.emotions[EmotionLabel::joy], 0.4, 1e-15);
  EXPECT_EQ(g.modalities, kVisualOnly);
  // Deselecting person 1 leaves person 0's values.
  const auto only0 = tl.fuse_group(3, Selection::make({0}, kVisualOnly));
  EXPECT_EQ(only0.emotions, tl.fuse_person(3, 0, Selection::make({0}, kVisualOnly))->emotions);
}

TEST(FuseGroup, MeanOfThreeChannels) {
  const Timeline tl(4.0, 0.25,
                    {obs(ModalityTag::visual, 0, 4, 0, 0.1), obs(ModalityTag::visual, 0, 4, 1, 0.5),
                     obs(ModalityTag::audio, 0, 4, std::nullopt, 0.6),
                     obs(ModalityTag::linguistic, 0, 4, std::nullopt, 0.9)},
                    {});
  const auto g = tl.fuse_group(0, Selection::all());
  EXPECT_NEAR(g.emotions[EmotionLabel::joy], 0.6, 1e-15);
  EXPECT_EQ(g.modalities, kAll);
}

TEST(FuseGroup, AbsentChannelsAreExcludedNotZeroFilled) {
  const Timeline tl(10.0, 0.25,
                    {obs(ModalityTag::visual, 0, 5, 0, 0.8), obs(ModalityTag::audio, 0, 10, std::nullopt, 0.4)}, {});
  EXPECT_NEAR(tl.fuse_group(0, Selection::all()).emotions[EmotionLabel::joy], 0.6, 1e-15);
  const auto late = tl.fuse_group(30, Selection::all());  // person gone, audio only
  EXPECT_EQ(late.emotions[EmotionLabel::joy], 0.4);
  EXPECT_EQ(late.modalities, std::vector<ModalityTag>{ModalityTag::audio});
}

TEST(FuseGroup, FallbackRecordWhenNothingContributes) {
  const Timeline tl(3.0, 0.25, {obs(ModalityTag::audio, 0, 1, std::nullopt, 0.4)}, {0});
  const auto g = tl.fuse_group(8, Selection::all());
  EXPECT_EQ(g.emotions, EmotionDistribution::none_only());
  EXPECT_EQ(g.va, VAPoint(0, 0));
  EXPECT_TRUE(g.modalities.empty());
  const auto r = tl.record(8, Selection::all());
  ASSERT_EQ(r.persons.size(), 1u);
  EXPECT_FALSE(r.persons.at(0));
}

TEST(FuseGroup, MatchesBruteForceOnRandomSets) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dur(0.3, 40.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d = dur(rng);
    const int n_persons = static_cast<int>(rng() % 5);
    const auto observations = oracle::random_observations(rng, d, n_persons);
    const Timeline tl(d, 0.25, observations, {});
    const auto sel = random_selection(rng, tl.persons());
    const auto selected = sel.resolved(tl.persons()).persons;
    for (std::int64_t k = 0; k < tl.grid().count(); ++k) {
      const double mid = (static_cast<double>(k) + 0.5) * 0.25;
      const auto expected = oracle::group(observations, selected, sel.modalities, mid);
      const auto got = tl.fuse_group(k, sel);
      ASSERT_EQ(got.modalities, expected.modalities) << "trial " << trial << " tick " << k;
      for (int j = 0; j < kNumLabels; ++j) {
        ASSERT_NEAR(got.emotions.scores()[j], expected.value.emotions[j], 1e-9) << "trial " << trial;
      }
      ASSERT_NEAR(got.va.valence(), expected.value.valence, 1e-9);
      ASSERT_NEAR(got.va.arousal(), expected.value.arousal, 1e-9);
    }
  }
}

TEST(FuseGroup, ConvexInItsContributions) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const double d = 20.0;
    const auto observations = oracle::random_observations(rng, d, 3);
    const Timeline tl(d, 0.25, observations, {});
    const auto sel = random_selection(rng, tl.persons());
    for (std::int64_t k = 0; k < tl.grid().count(); ++k) {
      const double mid = tl.grid().midpoint(k);
      std::vector<const ModalityObservation*> contributing;
      for (const auto& o : observations) {
        if (!sel.has(o.modality) || !o.interval.contains(mid)) continue;
        if (o.person_id && !sel.includes(*o.person_id)) continue;
        contributing.push_back(&o);
      }
      const auto g = tl.fuse_group(k, sel);
      if (contributing.empty()) continue;
      for (int j = 0; j < kNumLabels; ++j) {
        double lo = 1.0, hi = 0.0;
        for (auto* o : contributing) {
          lo = std::min(lo, o->emotions.scores()[j]);
          hi = std::max(hi, o->emotions.scores()[j]);
        }
        ASSERT_GE(g.emotions.scores()[j], lo - 1e-12);
        ASSERT_LE(g.emotions.scores()[j], hi + 1e-12);
      }
      for (const auto& [id, pv] : tl.record(k, sel).persons) {
        if (!pv) continue;
        for (int j = 0; j < kNumLabels; ++j) {
          double lo = 1.0, hi = 0.0;
          for (auto* o : contributing) {
            if (o->person_id != id) continue;
            lo = std::min(lo, o->emotions.scores()[j]);
            hi = std::max(hi, o->emotions.scores()[j]);
          }
          ASSERT_GE(pv->emotions.scores()[j], lo - 1e-12);
          ASSERT_LE(pv->emotions.scores()[j], hi + 1e-12);
        }
      }
    }
  }
}

TEST(FusePerson, SelectionIndependence) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto observations = oracle::random_observations(rng, 15.0, 4);
    const Timeline tl(15.0, 0.25, observations, {0, 1, 2, 3});
    const std::vector<PersonId> a{0, 2};
    const auto only_a = tl.build(Selection::make(a, kAll));
    const auto with_b = tl.build(Selection::make({0, 1, 2, 3}, kAll));
    const auto visual_only = tl.build(Selection::make({0, 1, 2}, kVisualOnly));
    for (std::size_t k = 0; k < only_a.size(); ++k) {
      for (auto id : a) {
        const auto& x = only_a[k].persons.at(id);
        const auto& y = with_b[k].persons.at(id);
        const auto& z = visual_only[k].persons.at(id);
        ASSERT_EQ(x.has_value(), y.has_value());
        ASSERT_EQ(x.has_value(), z.has_value());
        if (x) {
          ASSERT_EQ(x->emotions, y->emotions);
          ASSERT_EQ(x->va, y->va);
          ASSERT_EQ(x->emotions, z->emotions);
        }
      }
      ASSERT_FALSE(only_a[k].persons.contains(1));
    }
  }
}

TEST(FusePerson, ContractExamples) {
  const Timeline tl(5.0, 0.25, {obs(ModalityTag::visual, 0, 2, 0, 0.3, 0.5)}, {0});
  const auto v = tl.fuse_person(2, 0, Selection::all());
  ASSERT_TRUE(v);
  EXPECT_EQ(v->emotions[EmotionLabel::joy], 0.3);
  EXPECT_EQ(v->va, VAPoint(0.5, 0.0));
  EXPECT_FALSE(tl.fuse_person(10, 0, Selection::all()));
  EXPECT_THROW(tl.fuse_person(2, 9, Selection::all()), ValidationError);
  EXPECT_THROW(tl.fuse_person(2, 0, Selection::make({}, {ModalityTag::audio})), ValidationError);
  // Without visual the per-person map is empty but the group series exists.
  const auto recs = tl.build(Selection::make({}, {ModalityTag::audio}));
  EXPECT_EQ(recs.size(), 20u);
  for (const auto& r : recs) EXPECT_TRUE(r.persons.empty());
}

TEST(FuseGroup, InvariantUnderPersonRelabeling) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto observations = oracle::random_observations(rng, 12.0, 4);
    std::vector<PersonId> relabel{10, 3, 7, 0};
    std::shuffle(relabel.begin(), relabel.end(), rng);
    auto renamed = observations;
    for (auto& o : renamed) {
      if (o.person_id) o.person_id = relabel[static_cast<std::size_t>(*o.person_id)];
    }
    const Timeline a(12.0, 0.25, observations, {});
    const Timeline b(12.0, 0.25, renamed, {});
    for (std::int64_t k = 0; k < a.grid().count(); ++k) {
      const auto ga = a.fuse_group(k, Selection::all());
      const auto gb = b.fuse_group(k, Selection::all());
      ASSERT_EQ(ga.modalities, gb.modalities);
      ASSERT_LE((ga.emotions.scores() - gb.emotions.scores()).cwiseAbs().maxCoeff(), 1e-12);
      ASSERT_NEAR(ga.va.valence(), gb.va.valence(), 1e-12);
    }
  }
}

TEST(Timeline, OneTickDurationGivesOneRecord) {
  const Timeline tl(0.1, 0.25, {}, {});
  const auto recs = tl.build(Selection::all());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].group.emotions, EmotionDistribution::none_only());
}

TEST(Timeline, RequiresAFinishedSession) {
  SessionMeta meta{"s", 10.0, 25.0, true, Language::en, SessionStatus::processing, "", ""};
  EXPECT_THROW(Timeline::for_session(meta, 0.25, {}, {}), StateError);
  meta.status = SessionStatus::failed;
  EXPECT_THROW(Timeline::for_session(meta, 0.25, {}, {}), StateError);
  meta.status = SessionStatus::done;
  EXPECT_EQ(Timeline::for_session(meta, 0.25, {}, {}).grid().count(), 40);
}

TEST(Timeline, UnknownPersonsAreListed) {
  const Timeline tl(5.0, 0.25, {}, {0, 1});
  try {
    tl.build(Selection::make({1, 4, 9}, kAll));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "unknown person ids: 4,9");
  }
}

TEST(Timeline, RangeQueriesAreClamped) {
  const Timeline tl(30.0, 0.25, {}, {});
  const auto recs = tl.build(Selection::all(), 1.0, 2.0);
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_EQ(recs.front().tick, 4);
  EXPECT_EQ(recs.back().tick, 7);
  EXPECT_EQ(tl.build(Selection::all(), -5.0, 100.0).size(), 120u);
  EXPECT_EQ(tl.build(Selection::all(), 40.0, 50.0).size(), 0u);
  EXPECT_EQ(tl.build(Selection::all(), 1.1, 1.2).size(), 1u);
  EXPECT_THROW(tl.build(Selection::all(), NAN, 1.0), ValidationError);
}

TEST(Timeline, BuildIsDeterministicAndIndependentOfInputOrder) {
  std::mt19937_64 rng(12);
  auto observations = oracle::random_observations(rng, 10.0, 3);
  const Timeline a(10.0, 0.25, observations, {});
  std::reverse(observations.begin(), observations.end());
  const Timeline b(10.0, 0.25, observations, {});
  EXPECT_EQ(to_jsonl(a.build(Selection::all())), to_jsonl(b.build(Selection::all())));
}

TEST(TickRecordJson, Shape) {
  const Timeline tl(1.0, 0.25, {obs(ModalityTag::visual, 0, 0.5, 2, 0.5), obs(ModalityTag::audio, 0, 1, std::nullopt, 0.25)},
                    {2, 5});
  const Json j = to_json(tl.record(1, Selection::all()));
  EXPECT_EQ(j.at("tick"), 1);
  EXPECT_EQ(j.at("t"), 0.25);
  EXPECT_EQ(j.at("group").at("modalities"), Json::parse(R"(["visual","audio"])"));
  EXPECT_EQ(j.at("group").at("emotions").at("joy"), 0.375);
  EXPECT_EQ(j.at("persons").at("2").at("present"), true);
  EXPECT_EQ(j.at("persons").at("5").at("present"), false);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"tick", "t", "group", "persons"}));
  EXPECT_TRUE(j.at("persons").at("2").contains("va"));
}
