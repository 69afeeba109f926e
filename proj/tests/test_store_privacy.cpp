#include <gtest/gtest.h>

#include "emolysis/pipeline.hpp"
#include "emolysis/privacy.hpp"
#include "emolysis/store.hpp"
#include "support.hpp"

using namespace emolysis;
using emolysis::test::TempDir;
namespace fs = std::filesystem;

namespace {

StoredSession session(std::string id, SessionStatus status = SessionStatus::queued) {
  StoredSession s;
  s.meta.session_id = std::move(id);
  s.meta.duration_s = 4.0;
  s.meta.fps = 25.0;
  s.meta.has_audio = true;
  s.meta.language = Language::zh;
  s.meta.status = status;
  s.meta.created_at = "2026-01-02T03:04:05Z";
  s.config = to_json(AnalysisConfig{});
  return s;
}

AnalysisResult short_run() {
  fixture::Spec spec;
  spec.duration_s = 4.0;
  const auto media = MediaReader::open_memory(std::make_shared<const std::string>(fixture::make_avi(spec)));
  AnalysisConfig c;
  auto maps = std::make_shared<const labels::LabelMapRegistry>(labels::LabelMapRegistry::builtin());
  return Pipeline(c, maps, backends::BackendRegistry::with_reference().make(c.backends)).run(*media, Language::en);
}

std::string base64(std::string_view in) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) | (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    for (int s : {18, 12, 6, 0}) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  if (const auto rest = in.size() - i; rest > 0) {
    unsigned v = static_cast<unsigned char>(in[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(in[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

const std::string kPngHeader("\x89PNG\r\n\x1a\n\0\0\0\rIHDR", 16);

bool any_reason(const std::vector<privacy::Finding>& f, std::string_view needle) {
  return std::any_of(f.begin(), f.end(), [&](const auto& x) { return x.reason.find(needle) != std::string::npos; });
}

}  // namespace

TEST(Store, CreateReadAndList) {
  TempDir tmp;
  SessionStore store(tmp.path());
  EXPECT_TRUE(store.list().empty());
  const auto s = session("abc-1");
  store.create(s);
  EXPECT_TRUE(store.exists("abc-1"));
  EXPECT_EQ(store.list(), std::vector<std::string>{"abc-1"});
  const auto back = store.read_meta("abc-1");
  EXPECT_EQ(back.meta, s.meta);
  EXPECT_EQ(back.config, s.config);
  EXPECT_EQ(back.progress, StageFractions{});
  EXPECT_THROW(store.create(s), ValidationError);
  EXPECT_THROW(store.read_meta("missing"), NotFoundError);
}

TEST(Store, MetaRewriteKeepsOneFile) {
  TempDir tmp;
  SessionStore store(tmp.path());
  auto s = session("m");
  store.create(s);
  s.meta.status = SessionStatus::processing;
  s.progress[static_cast<std::size_t>(Stage::visual)] = 0.25;
  store.write_meta(s);
  const auto back = store.read_meta("m");
  EXPECT_EQ(back.meta.status, SessionStatus::processing);
  EXPECT_EQ(back.progress[static_cast<std::size_t>(Stage::visual)], 0.25);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(store.dir("m"))) names.push_back(e.path().filename().string());
  EXPECT_EQ(names, std::vector<std::string>{"meta.json"});
}

TEST(Store, IdsThatCouldEscapeTheRootAreRejected) {
  TempDir tmp;
  SessionStore store(tmp.path());
  for (const char* id : {"", "..", "../x", "a/b", "a b", "x.json"}) {
    EXPECT_FALSE(store.exists(id)) << id;
    EXPECT_THROW(store.dir(id), NotFoundError) << id;
  }
  EXPECT_THROW(store.create(session("../evil")), NotFoundError);
  EXPECT_FALSE(fs::exists(tmp.path().parent_path() / "evil"));
}

TEST(Store, ObservationsTracksAndCacheRoundTrip) {
  TempDir tmp;
  SessionStore store(tmp.path());
  store.create(session("s"));
  const auto r = short_run();
  const std::span<const ModalityObservation> all(r.observations);
  store.append_observations("s", all.first(all.size() / 2));
  store.append_observations("s", all.subspan(all.size() / 2));
  EXPECT_EQ(store.read_observations("s"), r.observations);

  store.write_tracks("s", r.tracks);
  const auto tracks = store.read_tracks("s");
  ASSERT_EQ(tracks.size(), r.tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    EXPECT_EQ(tracking::to_json(tracks[i]), tracking::to_json(r.tracks[i]));
  }

  EXPECT_FALSE(store.read_cache("s", "00ff"));
  store.write_cache("s", "00ff", "{\"t\":0.125}\n");
  EXPECT_EQ(store.read_cache("s", "00ff"), "{\"t\":0.125}\n");
}

TEST(Store, RecoverFailsUnfinishedSessionsAndClearsLeftovers) {
  TempDir tmp;
  {
    SessionStore store(tmp.path());
    store.create(session("q", SessionStatus::queued));
    store.create(session("p", SessionStatus::processing));
    store.create(session("d", SessionStatus::done));
    auto failed = session("f", SessionStatus::failed);
    failed.meta.error = "earlier";
    store.create(failed);
  }
  fs::create_directories(tmp / ".staging-z");
  write_file(tmp / ".staging-z" / "meta.json", "{}");
  write_file(tmp / "p" / "meta.json.1.2.tmp", "partial");

  SessionStore store(tmp.path());
  auto ids = store.recover();
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<std::string>{"p", "q"}));
  EXPECT_EQ(store.read_meta("p").meta.status, SessionStatus::failed);
  EXPECT_FALSE(store.read_meta("p").meta.error.empty());
  EXPECT_EQ(store.read_meta("q").meta.status, SessionStatus::failed);
  EXPECT_EQ(store.read_meta("d").meta.status, SessionStatus::done);
  EXPECT_EQ(store.read_meta("f").meta.error, "earlier");
  EXPECT_FALSE(fs::exists(tmp / ".staging-z"));
  EXPECT_FALSE(fs::exists(tmp / "p" / "meta.json.1.2.tmp"));
  EXPECT_TRUE(store.recover().empty());
}

TEST(WriteAtomic, ReplacesContentWithoutTempFiles) {
  TempDir tmp;
  write_atomic(tmp / "x.json", "one");
  write_atomic(tmp / "x.json", "two");
  EXPECT_EQ(read_file(tmp / "x.json"), "two");
  EXPECT_EQ(std::distance(fs::directory_iterator(tmp.path()), fs::directory_iterator{}), 1);
}

TEST(Privacy, MagicSignatures) {
  EXPECT_EQ(privacy::magic_at(kPngHeader, 0), "PNG");
  EXPECT_EQ(privacy::magic_at("\xFF\xD8\xFF\xE0", 0), "JPEG");
  EXPECT_EQ(privacy::magic_at("GIF89a", 0), "GIF");
  EXPECT_EQ(privacy::magic_at(std::string_view("RIFF\0\0\0\0WAVE", 12), 0), "RIFF container");
  EXPECT_EQ(privacy::magic_at(std::string_view("RIFF\0\0\0\0AVI ", 12), 0), "RIFF container");
  EXPECT_EQ(privacy::magic_at("xxOggS", 2), "Ogg");
  EXPECT_TRUE(privacy::magic_at("{\"valence\":0.5}", 0).empty());
  EXPECT_TRUE(privacy::magic_at("RIFF", 0).empty());
}

TEST(Privacy, CleanStoreHasNoFindings) {
  TempDir tmp;
  SessionStore store(tmp.path());
  store.create(session("s", SessionStatus::done));
  const auto r = short_run();
  store.append_observations("s", r.observations);
  store.write_tracks("s", r.tracks);
  store.write_cache("s", "all", "{\"t\":0.125}\n");
  const auto findings = privacy::scan_tree(tmp.path());
  for (const auto& f : findings) ADD_FAILURE() << f.file << ": " << f.reason;
}

// Negative controls: each planted artefact must be caught.
TEST(Privacy, PlantedPngIsFlagged) {
  TempDir tmp;
  write_file(tmp / "frame.bin", "header" + kPngHeader + "pixels");
  const auto f = privacy::scan_tree(tmp.path());
  ASSERT_FALSE(f.empty());
  EXPECT_TRUE(any_reason(f, "PNG"));
  EXPECT_EQ(f[0].offset, 6u);
}

TEST(Privacy, FiveKibStringFieldIsFlagged) {
  TempDir tmp;
  write_file(tmp / "observations.jsonl", "{\"ok\":1}\n" + dump_line(Json{{"blob", std::string(5 * 1024, 'a')}}) + "\n");
  const auto f = privacy::scan_tree(tmp.path());
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].offset, 2u);
  EXPECT_TRUE(any_reason(f, "5120 bytes"));
}

TEST(Privacy, FieldAtTheLimitIsAllowed) {
  const std::string doc = dump_line(Json{{"s", std::string(privacy::kMaxFieldBytes, 'b')}});
  EXPECT_TRUE(privacy::scan_bytes("x.json", doc).empty());
}

TEST(Privacy, Base64EncodedImageIsFlagged) {
  TempDir tmp;
  const std::string jpeg = std::string("\xFF\xD8\xFF\xE0", 4) + std::string(60, 'j');
  write_file(tmp / "meta.json", dump_line(Json{{"thumb", base64(jpeg)}}));
  EXPECT_TRUE(any_reason(privacy::scan_tree(tmp.path()), "base64 field decodes to JPEG"));
  write_file(tmp / "meta.json", dump_line(Json{{"thumb", base64(std::string(64, 'z'))}}));
  EXPECT_TRUE(privacy::scan_tree(tmp.path()).empty());
}

TEST(Privacy, NulBytesAndBrokenJsonAreFlagged) {
  EXPECT_TRUE(any_reason(privacy::scan_bytes("a.txt", std::string("ab\0c", 4)), "NUL"));
  EXPECT_TRUE(any_reason(privacy::scan_bytes("a.jsonl", "{\"a\":1}\n{oops\n"), "unparseable"));
}

TEST(Privacy, RawAudioWrittenAsJsonArrayIsFlagged) {
  // A 16 kHz second of samples as a string field blows the field limit.
  std::string samples;
  for (int i = 0; i < 16000; ++i) samples += std::to_string(i % 97) + ",";
  EXPECT_FALSE(privacy::scan_bytes("o.jsonl", dump_line(Json{{"pcm", samples}})).empty());
}
