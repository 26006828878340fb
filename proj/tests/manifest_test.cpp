#include <gtest/gtest.h>

#include <fstream>

#include "barkscope/error.hpp"
#include "barkscope/manifest.hpp"
#include "support.hpp"

using namespace barkscope;
using barkscope::testing::TempDir;
using nlohmann::json;

namespace {

std::string activity_json(double first = 1.0) {
  json a = json::array();
  for (std::size_t i = 0; i < kActivityDim; ++i) a.push_back(i == 0 ? first : 0.0);
  return a.dump();
}

std::string dog_line(const std::string& id, const std::string& extra = "") {
  return R"({"id":")" + id + R"(","kind":"dog_vocal","lang_env":"En","audio_path":"a.wav","start_s":0,"end_s":1,)" +
         R"("source_video_id":"v1","context":{"scene":"Play","location":"home","activity":)" + activity_json() + "}" +
         extra + "}";
}

std::vector<std::string> diagnostics_of(const std::string& text, const std::filesystem::path& dir) {
  try {
    parse_manifest(text, dir);
  } catch (const ValidationError& e) {
    return e.diagnostics();
  }
  return {};
}

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_wav(dir_ / "a.wav", barkscope::testing::tone(300.0, 0.2));
  }
  TempDir dir_;
};

}  // namespace

TEST_F(ManifestTest, ParsesHeaderAndRecords) {
  const std::string text =
      R"({"version":1,"declared_locations":["home"],"defaults":{"pairing":{"cos_threshold":0.9}}})"
      "\n" +
      dog_line("d1", R"(,"syllable_count":4)") + "\n\n" +
      R"({"id":"h1","kind":"host_speech","lang_env":"Ja","audio_path":"a.wav","start_s":2,"end_s":3.5,"source_video_id":"v1"})" +
      "\n";
  const Manifest m = parse_manifest(text, dir_.path());
  EXPECT_EQ(m.version, 1);
  ASSERT_EQ(m.clips.size(), 2u);
  EXPECT_EQ(m.declared_locations, std::vector<std::string>{"home"});
  EXPECT_EQ(m.defaults["pairing"]["cos_threshold"], 0.9);
  const ClipRecord* d = m.find("d1");
  ASSERT_NE(d, nullptr);
  EXPECT_EQ(d->audio_path, dir_.path() / "a.wav");
  EXPECT_EQ(d->context->scene, Scene::Play);
  EXPECT_EQ(d->context->activity.size(), kActivityDim);
  EXPECT_EQ(*d->syllable_count, 4.0);
  EXPECT_DOUBLE_EQ(m.find("h1")->length_s(), 1.5);
  EXPECT_EQ(m.find("h1")->kind, VocalizerKind::host_speech);
}

TEST_F(ManifestTest, EmptyManifestIsValid) {
  EXPECT_TRUE(parse_manifest("", dir_.path()).clips.empty());
}

TEST_F(ManifestTest, ReportsEveryProblemWithLineNumbers) {
  const std::string text = dog_line("d1") + "\n" + dog_line("d1") + "\n" + "{oops\n" +
                           R"({"id":"x","kind":"cat","lang_env":"Fr","audio_path":"nope.wav","start_s":2,"end_s":1})" +
                           "\n" + R"({"id":"y","kind":"dog_vocal","lang_env":"En","audio_path":"a.wav","start_s":0,"end_s":1})";
  const auto d = diagnostics_of(text, dir_.path());
  auto has = [&](const std::string& needle) {
    return std::any_of(d.begin(), d.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
  };
  EXPECT_TRUE(has("line 2: duplicate clip id 'd1'"));
  EXPECT_TRUE(has("line 3: invalid JSON"));
  EXPECT_TRUE(has("line 4: unknown kind 'cat'"));
  EXPECT_TRUE(has("line 4: unknown lang_env 'Fr'"));
  EXPECT_TRUE(has("line 4: audio file not found"));
  EXPECT_TRUE(has("line 4: end_s must be greater than start_s"));
  EXPECT_TRUE(has("line 5: dog_vocal record needs a context"));
  EXPECT_GE(d.size(), 7u);
}

TEST_F(ManifestTest, ContextChecks) {
  const std::string header = R"({"version":1,"declared_locations":["park"]})";
  auto d = diagnostics_of(header + "\n" + dog_line("d1"), dir_.path());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].find("location 'home' is not declared"), std::string::npos);

  std::string zero = dog_line("d2");
  zero.replace(zero.find("[1.0"), 4, "[0.0");
  d = diagnostics_of(zero, dir_.path());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].find("zero norm"), std::string::npos);

  d = diagnostics_of(R"({"version":2})", dir_.path());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].find("unsupported manifest version 2"), std::string::npos);
}

TEST_F(ManifestTest, ActivityBlobRoundTrip) {
  std::vector<double> act(kActivityDim);
  for (std::size_t i = 0; i < kActivityDim; ++i) act[i] = static_cast<float>(0.001 * static_cast<double>(i) - 0.3);
  write_activity_blob(dir_ / "act.f32", act);
  EXPECT_EQ(std::filesystem::file_size(dir_ / "act.f32"), kActivityDim * 4);
  EXPECT_EQ(read_activity_blob(dir_ / "act.f32"), act);
  std::ofstream(dir_ / "short.f32") << "abc";
  EXPECT_THROW(read_activity_blob(dir_ / "short.f32"), ValidationError);

  const std::string line =
      R"({"id":"d","kind":"dog_vocal","lang_env":"Ja","audio_path":"a.wav","start_s":0,"end_s":1,"source_video_id":"v",)"
      R"("context":{"scene":"Walk","location":"yard","activity_path":"act.f32"}})";
  const Manifest m = parse_manifest(line, dir_.path());
  EXPECT_EQ(m.clips[0].context->activity, act);
}

TEST_F(ManifestTest, RecordJsonRoundTrip) {
  const Manifest m = parse_manifest(dog_line("d1", R"(,"syllable_count":3)"), dir_.path());
  const json j = record_to_json(m.clips[0], dir_.path(), std::nullopt);
  EXPECT_EQ(j["audio_path"], "a.wav");
  const Manifest back = parse_manifest(j.dump(), dir_.path());
  EXPECT_EQ(back.clips[0].id, "d1");
  EXPECT_EQ(back.clips[0].context->activity, m.clips[0].context->activity);
  EXPECT_EQ(back.clips[0].syllable_count, m.clips[0].syllable_count);
}

TEST_F(ManifestTest, LoadResolvesRelativeToManifest) {
  std::filesystem::create_directories(dir_ / "sub");
  write_wav(dir_ / "sub" / "a.wav", barkscope::testing::tone(300.0, 0.2));
  std::ofstream(dir_ / "sub" / "m.jsonl") << dog_line("d1") << "\n";
  const Manifest m = load_manifest(dir_ / "sub" / "m.jsonl");
  EXPECT_EQ(m.clips[0].audio_path, dir_ / "sub" / "a.wav");
  EXPECT_TRUE(std::filesystem::exists(m.clips[0].audio_path));
}
