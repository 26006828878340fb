#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "barkscope/audio.hpp"
#include "barkscope/error.hpp"
#include "support.hpp"

using namespace barkscope;
using barkscope::testing::TempDir;

namespace {

// O(n^2) DFT power with the same one-sided normalization.
std::vector<double> brute_power(const std::vector<double>& x, std::size_t n) {
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n));
    }
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    p[k] = std::norm(acc) / static_cast<double>(n) * (unpaired ? 1.0 : 2.0);
  }
  return p;
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

TEST(Audio, WavRoundTripFloat32IsExactForRepresentableSamples) {
  TempDir dir;
  AudioClip c;
  c.sample_rate = 16000;
  for (int i = 0; i < 100; ++i) c.samples.push_back(static_cast<float>(std::sin(i * 0.1) * 0.7));
  write_wav(dir / "a.wav", c, WavEncoding::float32);
  const AudioClip back = load_audio(dir / "a.wav");
  EXPECT_EQ(back.sample_rate, 16000);
  ASSERT_EQ(back.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) EXPECT_EQ(back.samples[i], c.samples[i]);
  EXPECT_EQ(back.id, "a");
}

TEST(Audio, WavRoundTripPcm16WithinQuantization) {
  TempDir dir;
  const AudioClip c = barkscope::testing::tone(440.0, 0.05, 0.8, 8000);
  write_wav(dir / "b.wav", c);
  const AudioClip back = load_audio(dir / "b.wav");
  EXPECT_EQ(back.sample_rate, 8000);
  ASSERT_EQ(back.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) EXPECT_NEAR(back.samples[i], c.samples[i], 1.0 / 32767.0);
}

TEST(Audio, RejectsGarbageFile) {
  TempDir dir;
  std::ofstream(dir / "x.wav") << "not a wave file at all";
  EXPECT_THROW(load_audio(dir / "x.wav"), Error);
  EXPECT_THROW(load_audio(dir / "missing.wav"), Error);
}

TEST(Audio, FramePowerMatchesBruteForceDft) {
  Rng rng(3);
  std::vector<double> x(37);
  for (double& v : x) v = rng.normal();
  for (std::size_t n : {37u, 64u}) {
    const auto fast = frame_power_spectrum(x, n);
    const auto slow = brute_power(x, n);
    ASSERT_EQ(fast.size(), slow.size());
    for (std::size_t k = 0; k < fast.size(); ++k) EXPECT_NEAR(fast[k], slow[k], 1e-10) << "n=" << n << " k=" << k;
  }
}

TEST(Audio, ParsevalHoldsForEveryFrame) {
  const AudioClip c = barkscope::testing::white_noise(0.3, 0.2, 11);
  const SpectralFrameSeq spec = power_spectrogram(c);
  const auto win = hann_window(400);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    std::vector<double> frame(400);
    for (std::size_t i = 0; i < 400; ++i) frame[i] = c.samples[f * 160 + i] * win[i];
    double sum = 0.0;
    for (double p : spec.frame(f)) sum += p;
    EXPECT_LT(std::abs(sum - energy(frame)), 1e-6 * std::max(1.0, energy(frame)));
  }
}

TEST(Audio, SpectrogramGeometry) {
  const AudioClip c = barkscope::testing::tone(1000.0, 1.0);
  const SpectralFrameSeq spec = power_spectrogram(c);
  EXPECT_EQ(spec.n_bins, 201u);
  EXPECT_EQ(spec.n_frames, (16000u - 400u) / 160u + 1u);
  EXPECT_DOUBLE_EQ(spec.bin_hz, 40.0);
  // 1 kHz lands in bin 25.
  const auto fr = spec.frame(10);
  EXPECT_EQ(std::max_element(fr.begin(), fr.end()) - fr.begin(), 25);
  EXPECT_THROW(power_spectrogram(barkscope::testing::tone(100.0, 0.01)), ValidationError);
}

TEST(Audio, AutocorrelationMatchesDirectSum) {
  Rng rng(5);
  std::vector<double> x(50);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const auto r = autocorrelation(x, 20);
  for (std::size_t lag = 0; lag <= 20; ++lag) {
    double direct = 0.0;
    for (std::size_t i = 0; i + lag < x.size(); ++i) direct += x[i] * x[i + lag];
    EXPECT_NEAR(r[lag], direct, 1e-10);
  }
}

TEST(Audio, ResamplePreservesLowTone) {
  const AudioClip c = barkscope::testing::tone(300.0, 0.5, 0.5, 44100);
  const AudioClip r = resample(c, 16000);
  EXPECT_EQ(r.sample_rate, 16000);
  EXPECT_EQ(r.samples.size(), 8000u);
  const AudioClip ref = barkscope::testing::tone(300.0, 0.5, 0.5, 16000);
  double worst = 0.0;
  for (std::size_t i = 1000; i < 7000; ++i) worst = std::max(worst, std::abs(r.samples[i] - ref.samples[i]));
  EXPECT_LT(worst, 5e-3);
}

TEST(Audio, ResampleSuppressesAliases) {
  // 7.5 kHz content is above the 4 kHz Nyquist of the target.
  const AudioClip c = barkscope::testing::tone(7500.0, 0.5, 0.5, 16000);
  const AudioClip r = resample(c, 8000);
  double rms = 0.0;
  for (std::size_t i = 500; i + 500 < r.samples.size(); ++i) rms += r.samples[i] * r.samples[i];
  rms = std::sqrt(rms / static_cast<double>(r.samples.size() - 1000));
  EXPECT_LT(rms, 0.01);
}

TEST(Audio, EnvelopeIsWindowRms) {
  AudioClip c;
  c.sample_rate = 1000;
  c.samples = std::vector<double>(25, 0.0);
  for (int i = 10; i < 20; ++i) c.samples[i] = (i % 2 ? 0.5 : -0.5);
  const EnvelopeSeq env = amplitude_envelope(c, 100.0);
  ASSERT_EQ(env.values.size(), 3u);
  EXPECT_DOUBLE_EQ(env.rate_hz, 100.0);
  EXPECT_DOUBLE_EQ(env.values[0], 0.0);
  EXPECT_DOUBLE_EQ(env.values[1], 0.5);
  EXPECT_DOUBLE_EQ(env.values[2], 0.0);
}

TEST(Audio, SliceClampsToBounds) {
  const AudioClip c = barkscope::testing::tone(100.0, 1.0);
  EXPECT_EQ(slice(c, 0.25, 0.5).samples.size(), 4000u);
  EXPECT_EQ(slice(c, -1.0, 0.1).samples.size(), 1600u);
  EXPECT_EQ(slice(c, 0.9, 5.0).samples.size(), 1600u);
  EXPECT_TRUE(slice(c, 0.5, 0.2).samples.empty());
}
