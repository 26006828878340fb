#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "barkscope/error.hpp"
#include "barkscope/features.hpp"
#include "barkscope/stats.hpp"
#include "barkscope/synthcorpus.hpp"
#include "support.hpp"

using namespace barkscope;
using barkscope::testing::TempDir;

namespace {

double median_semitone(const PitchContour& c) {
  std::vector<double> v;
  for (const auto& s : c.f0_semitone) {
    if (s) v.push_back(*s);
  }
  return v.empty() ? 0.0 : median(v);
}

// Triangular mel bank written out from the textbook definition.
std::vector<double> brute_log_mel(std::span<const double> frame, double bin_hz, std::size_t bands) {
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double top = mel(static_cast<double>(frame.size() - 1) * bin_hz);
  std::vector<double> out(bands);
  for (std::size_t m = 0; m < bands; ++m) {
    const double lo = inv(top * m / (bands + 1.0));
    const double mid = inv(top * (m + 1.0) / (bands + 1.0));
    const double hi = inv(top * (m + 2.0) / (bands + 1.0));
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < frame.size(); ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      num += w * frame[k];
      den += w;
    }
    out[m] = std::log(std::max(num / den, 1e-10));
  }
  return out;
}

std::vector<double> brute_dct(const std::vector<double>& x, std::size_t n_out) {
  const double n = static_cast<double>(x.size());
  std::vector<double> c(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * std::cos(std::numbers::pi * k * (i + 0.5) / n);
    c[k] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
  }
  return c;
}

AudioClip bark_clip(double f0, double rate, std::uint64_t seed, double snr = 30.0) {
  BurstParams p;
  p.f0_hz = f0;
  p.am_rate_hz = rate;
  p.noise_snr_db = snr;
  Rng rng(seed);
  return synthesize_bursts(p, rng);
}

}  // namespace

TEST(Pitch, SemitoneScale) {
  EXPECT_DOUBLE_EQ(hz_to_semitone(27.5), 0.0);
  EXPECT_NEAR(hz_to_semitone(440.0), 48.0, 1e-12);
  EXPECT_NEAR(hz_to_semitone(55.0), 12.0, 1e-12);
}

TEST(Pitch, PureToneTrackedWithinATenthOfASemitone) {
  for (double hz : {110.0, 220.0, 440.0, 600.0, 1000.0}) {
    const auto c = f0_contour(barkscope::testing::tone(hz, 0.5));
    EXPECT_GT(c.voiced_count(), 40u);
    EXPECT_NEAR(median_semitone(c), hz_to_semitone(hz), 0.1) << hz;
  }
}

TEST(Pitch, WhiteNoiseMostlyUnvoiced) {
  const auto c = f0_contour(barkscope::testing::white_noise(0.5, 0.3, 9));
  EXPECT_LT(c.voiced_count(), c.f0_semitone.size() / 5);
}

TEST(Pitch, HarmonicBurstsRecoverPlantedF0) {
  for (double f0 : {300.0, 450.0, 600.0}) {
    const auto c = f0_contour(bark_clip(f0, 4.0, 21));
    const double est = 27.5 * std::exp2(median_semitone(c) / 12.0);
    EXPECT_NEAR(est / f0, 1.0, 0.03);
  }
}

TEST(Mfcc, DctIsOrthonormal) {
  const std::size_t n = 24;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> e(n, 0.0);
    e[a] = 1.0;
    const auto ca = dct2(e, n);
    EXPECT_NEAR(std::inner_product(ca.begin(), ca.end(), ca.begin(), 0.0), 1.0, 1e-12);
  }
  Rng rng(1);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  const auto fast = dct2(x, 13);
  const auto slow = brute_dct(x, 13);
  for (std::size_t k = 0; k < 13; ++k) EXPECT_NEAR(fast[k], slow[k], 1e-12);
}

TEST(Mfcc, EqualsBruteForceDctOfLogMel) {
  const AudioClip clip = bark_clip(350.0, 4.0, 5);
  const SpectralFrameSeq spec = power_spectrogram(clip);
  const FeatureVector v = mfcc(spec);
  std::vector<double> mean(13, 0.0);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    const auto c = brute_dct(brute_log_mel(spec.frame(f), spec.bin_hz, 24), 13);
    for (std::size_t k = 0; k < 13; ++k) mean[k] += c[k] / static_cast<double>(spec.n_frames);
  }
  ASSERT_EQ(v.values.size(), 13u);
  for (std::size_t k = 0; k < 13; ++k) EXPECT_NEAR(v.values[k], mean[k], 1e-9) << k;
}

TEST(Filterbank, PeaksAtToneBand) {
  const FeatureVector v = extract(FeatureSetId::filterbank24, barkscope::testing::tone(1000.0, 0.5));
  ASSERT_EQ(v.values.size(), 24u);
  const auto top = std::max_element(v.values.begin(), v.values.end()) - v.values.begin();
  // Band centres on the mel scale around 1 kHz.
  EXPECT_GE(top, 7);
  EXPECT_LE(top, 10);
}

TEST(Plp, LevinsonSolvesNormalEquationsAndIsStable) {
  const SpectralFrameSeq spec = power_spectrogram(bark_clip(400.0, 4.0, 8));
  std::size_t checked = 0;
  for (std::size_t f = 0; f < spec.n_frames; f += 7) {
    const auto frame = plp_frame(spec.frame(f), spec.bin_hz, 12);
    if (!frame) continue;
    ++checked;
    for (double k : frame->reflection) EXPECT_LT(std::abs(k), 1.0);
    EXPECT_GT(frame->error, 0.0);
    // Cepstrum of the all-pole model by numerical integration of its log spectrum.
    const std::size_t grid = 4096;
    for (std::size_t n = 0; n <= 12; ++n) {
      double acc = 0.0;
      for (std::size_t g = 0; g < grid; ++g) {
        const double w = std::numbers::pi * (g + 0.5) / grid;
        std::complex<double> a = 0.0;
        for (std::size_t j = 0; j < frame->lpc.size(); ++j) a += frame->lpc[j] * std::polar(1.0, -w * j);
        acc += std::log(frame->error / std::norm(a)) * std::cos(w * n);
      }
      // log P(w) = c0 + 2 sum c_n cos(w n), so the projection recovers c_n directly.
      acc /= grid;
      EXPECT_NEAR(frame->cepstrum[n], acc, 1e-6) << "n=" << n;
    }
  }
  EXPECT_GT(checked, 3u);
}

TEST(Plp, SilenceHasNoFrames) {
  AudioClip c;
  c.samples.assign(8000, 0.0);
  EXPECT_THROW(extract(FeatureSetId::plp13, c), ValidationError);
}

TEST(Gemaps, DimensionAndNames) {
  const FeatureVector v = extract(FeatureSetId::gemaps_lite, bark_clip(300.0, 4.0, 2));
  EXPECT_EQ(v.values.size(), 36u);
  EXPECT_EQ(v.names, feature_names(FeatureSetId::gemaps_lite));
  EXPECT_TRUE(v.sentinel_dims.empty());
  for (double x : v.values) EXPECT_TRUE(std::isfinite(x));
}

TEST(Gemaps, GainInvarianceOfNonLoudnessDims) {
  const AudioClip base = bark_clip(380.0, 5.0, 4);
  const FeatureVector a = gemaps_lite(base);
  const auto& exempt = gemaps_level_dependent_dims();
  for (double gain : {0.25, 0.5, 2.0}) {
    const FeatureVector b = gemaps_lite(barkscope::testing::scaled(base, gain));
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (std::find(exempt.begin(), exempt.end(), a.names[i]) != exempt.end()) continue;
      EXPECT_NEAR(a.values[i], b.values[i], 1e-6) << a.names[i] << " gain " << gain;
    }
    EXPECT_NEAR(b.at("loudness_sma3_percentile50.0") - a.at("loudness_sma3_percentile50.0"),
                20.0 * std::log10(gain), 1e-6);
  }
}

TEST(Gemaps, UnvoicedClipUsesSentinels) {
  const FeatureVector v = gemaps_lite(barkscope::testing::white_noise(0.5, 0.2, 3));
  EXPECT_FALSE(v.sentinel_dims.empty());
  for (const auto& d : v.sentinel_dims) EXPECT_EQ(v.at(d), 0.0);
  EXPECT_TRUE(std::is_sorted(v.sentinel_dims.begin(), v.sentinel_dims.end()));
}

TEST(Gemaps, RejectsVeryShortClip) {
  EXPECT_THROW(gemaps_lite(barkscope::testing::tone(300.0, 0.05)), ValidationError);
}

TEST(Gemaps, PeaksPerSecondFollowAmRate) {
  const FeatureVector slow = gemaps_lite(bark_clip(300.0, 3.0, 6));
  const FeatureVector fast = gemaps_lite(bark_clip(300.0, 6.0, 6));
  EXPECT_NEAR(slow.at("loudnessPeaksPerSec"), 3.0, 0.5);
  EXPECT_NEAR(fast.at("loudnessPeaksPerSec"), 6.0, 0.75);
  EXPECT_NEAR(slow.at("VoicedSegmentsPerSec"), 3.0, 0.5);
}

TEST(FeatureStore, CsvRoundTripIsExact) {
  TempDir dir;
  FeatureStore store(FeatureSetId::mfcc13);
  for (int i = 0; i < 3; ++i) {
    FeatureVector v = extract(FeatureSetId::mfcc13, bark_clip(300.0 + 50 * i, 4.0, i));
    v.clip_id = "clip" + std::to_string(i);
    store.put(v);
  }
  store.save(dir / "m.csv");
  const FeatureStore back = FeatureStore::load(dir / "m.csv");
  ASSERT_EQ(back.size(), 3u);
  for (const auto& row : store.rows()) EXPECT_EQ(back.get(row.clip_id).values, row.values);
  EXPECT_THROW(back.get("nope"), Error);
  EXPECT_THROW(store.put(extract(FeatureSetId::plp13, bark_clip(300.0, 4.0, 1))), ValidationError);
}

TEST(FeatureSet, CompareConcatenatesWithSuffixes) {
  FeatureVector a = extract(FeatureSetId::mfcc13, bark_clip(300.0, 4.0, 1));
  FeatureVector b = extract(FeatureSetId::mfcc13, bark_clip(500.0, 4.0, 2));
  const FeatureVector c = compare_feature_set(a, b);
  EXPECT_EQ(c.values.size(), 26u);
  EXPECT_EQ(c.names.front(), "mfcc_0_left");
  EXPECT_EQ(c.names.back(), "mfcc_12_right");
  EXPECT_EQ(c.values[13], b.values[0]);
  EXPECT_THROW(feature_set_from_string("mfcc"), ValidationError);
}
