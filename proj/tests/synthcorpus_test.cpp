#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "barkscope/error.hpp"
#include "barkscope/features.hpp"
#include "barkscope/stats.hpp"
#include "barkscope/synthcorpus.hpp"
#include "support.hpp"

using namespace barkscope;
using barkscope::testing::TempDir;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_clips_per_group = 4;
  s.groups = {{LangEnv::En, 300.0, 3.0, -20.0}, {LangEnv::Ja, 600.0, 6.0, -20.0}};
  s.write_annotations = true;
  s.seed = seed;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double median_f0_hz(const AudioClip& clip) {
  std::vector<double> st;
  for (const auto& v : f0_contour(clip).f0_semitone) {
    if (v) st.push_back(*v);
  }
  return 27.5 * std::pow(2.0, median(st) / 12.0);
}

}  // namespace

TEST(Synth, BurstGeometry) {
  BurstParams p;
  p.am_rate_hz = 4.0;
  p.n_bursts = 3;
  const auto spans = burst_spans(p);
  ASSERT_EQ(spans.size(), 3u);
  EXPECT_DOUBLE_EQ(spans[1].first, 0.25);
  EXPECT_DOUBLE_EQ(spans[1].second, 0.375);
  Rng rng(1);
  const AudioClip clip = synthesize_bursts(p, rng);
  EXPECT_NEAR(clip.duration_s(), 0.75, 1.0 / clip.sample_rate);
}

TEST(Synth, PlantedF0IsMeasurable) {
  for (double f0 : {300.0, 600.0}) {
    BurstParams p;
    p.f0_hz = f0;
    Rng rng(2);
    EXPECT_NEAR(median_f0_hz(synthesize_bursts(p, rng)) / f0, 1.0, 0.03) << f0;
  }
}

TEST(Synth, PlantedPartnerHasExactCorrelation) {
  Rng rng(3);
  std::vector<double> x(40);
  for (double& v : x) v = rng.normal();
  for (double rho : {-0.8, 0.0, 0.6, 1.0}) {
    const auto y = planted_partner(x, rho, rng);
    if (rho == 0.0) {
      double dot = 0.0;
      const double mx = mean(x);
      for (std::size_t i = 0; i < x.size(); ++i) dot += (x[i] - mx) * y[i];
      EXPECT_NEAR(dot, 0.0, 1e-9);
      continue;
    }
    EXPECT_NEAR(pearson(x, y).r, rho, 1e-12) << rho;
    EXPECT_NEAR(mean(y), 0.0, 1e-12);
  }
}

TEST(Synth, GenerateWritesManifestAudioAndTruth) {
  TempDir dir;
  const SynthResult res = generate(small_spec(5), dir.path());
  ASSERT_TRUE(std::filesystem::exists(res.manifest_path));
  ASSERT_TRUE(std::filesystem::exists(res.truth_path));
  std::size_t dogs = 0, hosts = 0;
  for (const ClipRecord& r : res.manifest.clips) {
    EXPECT_TRUE(std::filesystem::exists(r.audio_path)) << r.id;
    ASSERT_TRUE(res.truth.count(r.id)) << r.id;
    const SynthClipTruth& t = res.truth.at(r.id);
    EXPECT_EQ(t.kind, r.kind);
    EXPECT_EQ(t.source_video_id, r.source_video_id);
    if (r.kind == VocalizerKind::dog_vocal) {
      ++dogs;
      ASSERT_TRUE(r.context.has_value());
      ASSERT_TRUE(r.annotation_path.has_value());
      EXPECT_EQ(t.word_boundaries_s.size(), t.n_bursts);
      EXPECT_NEAR(t.duration_s, static_cast<double>(t.n_bursts) / t.am_rate_hz, 1e-3);
    } else {
      ++hosts;
    }
  }
  EXPECT_EQ(dogs, 8u);
  EXPECT_EQ(hosts, 8u);
  const auto j = nlohmann::json::parse(slurp(res.truth_path));
  EXPECT_TRUE(j.contains("clips"));
}

TEST(Synth, SameSeedIsByteIdentical) {
  TempDir a, b, c;
  const SynthResult ra = generate(small_spec(9), a.path());
  generate(small_spec(9), b.path());
  generate(small_spec(10), c.path());
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  EXPECT_EQ(slurp(a / "truth.json"), slurp(b / "truth.json"));
  const std::string first = ra.manifest.clips.front().id;
  EXPECT_EQ(slurp(a / "audio" / (first + ".wav")), slurp(b / "audio" / (first + ".wav")));
  EXPECT_NE(slurp(a / "audio" / (first + ".wav")), slurp(c / "audio" / (first + ".wav")));
}

TEST(Synth, InvalidSpecRejected) {
  TempDir dir;
  SynthSpec s;
  EXPECT_THROW(generate(s, dir.path()), ValidationError);
  s = small_spec(1);
  s.duty = 1.0;
  EXPECT_THROW(generate(s, dir.path()), ValidationError);
}
