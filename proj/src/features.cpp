#include "barkscope/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "barkscope/error.hpp"
#include "barkscope/stats.hpp"
#include "barkscope/text.hpp"

namespace barkscope {
namespace {

std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// The first ten are the dimensions the prominence analysis reports on, in
// that order; the rest complete the symmetric statistics.
const std::vector<std::string> kGemapsNames{
    "loudness_sma3_amean",
    "F0semitoneFrom27.5Hz_sma3nz_percentile50.0",
    "loudness_sma3_meanRisingSlope",
    "logRelF0-H1-A3_sma3nz_stddevNorm",
    "loudnessPeaksPerSec",
    "F0semitoneFrom27.5Hz_sma3nz_percentile80.0",
    "hammarbergIndexV_sma3nz_stddevNorm",
    "slopeV0-500_sma3nz_amean",
    "loudness_sma3_percentile80.0",
    "slopeV500-1500_sma3nz_stddevNorm",
    "F0semitoneFrom27.5Hz_sma3nz_amean",
    "F0semitoneFrom27.5Hz_sma3nz_stddevNorm",
    "F0semitoneFrom27.5Hz_sma3nz_percentile20.0",
    "F0semitoneFrom27.5Hz_sma3nz_pctlrange0-2",
    "F0semitoneFrom27.5Hz_sma3nz_meanRisingSlope",
    "F0semitoneFrom27.5Hz_sma3nz_meanFallingSlope",
    "loudness_sma3_stddevNorm",
    "loudness_sma3_percentile20.0",
    "loudness_sma3_percentile50.0",
    "loudness_sma3_pctlrange0-2",
    "loudness_sma3_meanFallingSlope",
    "logRelF0-H1-A3_sma3nz_amean",
    "hammarbergIndexV_sma3nz_amean",
    "slopeV0-500_sma3nz_stddevNorm",
    "slopeV500-1500_sma3nz_amean",
    "alphaRatioV_sma3nz_amean",
    "alphaRatioV_sma3nz_stddevNorm",
    "hammarbergIndexUV_sma3nz_amean",
    "slopeUV0-500_sma3nz_amean",
    "slopeUV500-1500_sma3nz_amean",
    "alphaRatioUV_sma3nz_amean",
    "VoicedSegmentsPerSec",
    "MeanVoicedSegmentLengthSec",
    "StddevVoicedSegmentLengthSec",
    "MeanUnvoicedSegmentLength",
    "StddevUnvoicedSegmentLength",
};

const std::vector<std::string> kFbankNames = numbered("fbank_", 24);
const std::vector<std::string> kMfccNames = numbered("mfcc_", 13);
const std::vector<std::string> kPlpNames = numbered("plp_", 13);

double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Area-normalized triangular filters: each row sums to 1, so a band value is
// the mean power density under its triangle.
std::vector<std::vector<double>> mel_weights(std::size_t n_bins, double bin_hz, std::size_t n_bands) {
  const double nyquist = static_cast<double>(n_bins - 1) * bin_hz;
  const double top = mel(nyquist);
  std::vector<double> edges(n_bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_bands + 1));
  }
  std::vector<std::vector<double>> w(n_bands, std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < n_bands; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double sum = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double v = 0.0;
      if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      w[m][k] = v;
      sum += v;
    }
    if (sum <= 0.0) {
      // Band narrower than a bin: take the nearest bin.
      const auto k = std::min(n_bins - 1, static_cast<std::size_t>(std::lround(mid / bin_hz)));
      w[m][k] = 1.0;
      sum = 1.0;
    }
    for (double& v : w[m]) v /= sum;
  }
  return w;
}

void require_frames(const SpectralFrameSeq& spec, const char* what) {
  if (spec.n_frames == 0 || spec.n_bins < 2) {
    throw ValidationError(std::string(what) + ": spectrogram has no frames");
  }
}

FeatureVector make_vector(FeatureSetId id, std::vector<double> values) {
  FeatureVector v;
  v.set_id = id;
  v.names = feature_names(id);
  v.values = std::move(values);
  return v;
}

// ---- gemaps helpers -------------------------------------------------------

constexpr double kFrameLenS = 0.025;
constexpr double kFrameHopS = 0.010;
// Contour steps smaller than this are treated as flat when splitting into
// rising/falling runs.
constexpr double kFlatStep = 1e-6;

struct FrameLayout {
  std::size_t len = 0;
  std::size_t hop = 0;
  std::size_t n_frames = 0;
};

FrameLayout layout(const AudioClip& clip) {
  FrameLayout l;
  l.len = static_cast<std::size_t>(std::lround(kFrameLenS * clip.sample_rate));
  l.hop = static_cast<std::size_t>(std::lround(kFrameHopS * clip.sample_rate));
  const std::size_t n = clip.samples.size();
  l.n_frames = n >= l.len ? (n - l.len) / l.hop + 1 : 1;
  return l;
}

// Windowed analysis segment of `width` samples centred on frame i's centre,
// zero outside the clip, local mean removed.
std::vector<double> centred_segment(const AudioClip& clip, const FrameLayout& l, std::size_t i,
                                    std::size_t width) {
  const auto centre = static_cast<long long>(i * l.hop + l.len / 2);
  const long long start = centre - static_cast<long long>(width / 2);
  const auto n = static_cast<long long>(clip.samples.size());
  std::vector<double> seg(width, 0.0);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < width; ++j) {
    const long long s = start + static_cast<long long>(j);
    if (s >= 0 && s < n) {
      seg[j] = clip.samples[static_cast<std::size_t>(s)];
      sum += seg[j];
      ++count;
    }
  }
  if (count > 0) {
    const double mean = sum / static_cast<double>(count);
    for (std::size_t j = 0; j < width; ++j) {
      const long long s = start + static_cast<long long>(j);
      if (s >= 0 && s < n) seg[j] -= mean;
    }
  }
  return seg;
}

std::vector<double> sma3(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 3) return x;
  std::vector<double> s(n);
  s[0] = (x[0] + x[1]) / 2.0;
  s[n - 1] = (x[n - 2] + x[n - 1]) / 2.0;
  for (std::size_t i = 1; i + 1 < n; ++i) s[i] = (x[i - 1] + x[i] + x[i + 1]) / 3.0;
  return s;
}

struct Slopes {
  double rising = 0.0;
  double falling = 0.0;
};

// Mean slope magnitude (units per second) over maximal strictly rising and
// strictly falling runs of each contiguous piece.
void accumulate_slopes(const std::vector<double>& x, double hop_s, std::vector<double>& rising,
                       std::vector<double>& falling) {
  std::size_t i = 0;
  const std::size_t n = x.size();
  while (i + 1 < n) {
    const double d = x[i + 1] - x[i];
    if (std::abs(d) <= kFlatStep) {
      ++i;
      continue;
    }
    const bool up = d > 0;
    std::size_t j = i + 1;
    while (j + 1 < n) {
      const double dj = x[j + 1] - x[j];
      if (std::abs(dj) <= kFlatStep || (dj > 0) != up) break;
      ++j;
    }
    const double slope = std::abs(x[j] - x[i]) / (static_cast<double>(j - i) * hop_s);
    (up ? rising : falling).push_back(slope);
    i = j;
  }
}

double mean_or_zero(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_norm(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mu = mean_or_zero(v);
  if (std::abs(mu) < 1e-12) return 0.0;
  return population_stddev(v) / std::abs(mu);
}

// Peaks with `h` dB hysteresis: a peak counts once the contour has risen h
// above the preceding minimum and then fallen h below the peak (or the clip
// ends while it is still up). The clip is taken to start from the floor.
std::size_t count_peaks(const std::vector<double>& x, double h) {
  if (x.empty()) return 0;
  std::size_t peaks = 0;
  double lo = std::min(x[0], kLoudnessFloorDb), hi = x[0];
  bool rising = false;
  for (double v : x) {
    if (!rising) {
      lo = std::min(lo, v);
      if (v >= lo + h) {
        rising = true;
        hi = v;
      }
    } else {
      hi = std::max(hi, v);
      if (v <= hi - h) {
        ++peaks;
        rising = false;
        lo = v;
      }
    }
  }
  if (rising) ++peaks;
  return peaks;
}

double regression_slope(const std::vector<double>& db, double bin_hz, double lo_hz, double hi_hz) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < db.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f < lo_hz || f > hi_hz) continue;
    sx += f;
    sy += db[k];
    sxx += f * f;
    sxy += f * db[k];
    ++n;
  }
  if (n < 2) return 0.0;
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  return denom == 0.0 ? 0.0 : (static_cast<double>(n) * sxy - sx * sy) / denom;
}

double band_max(const std::vector<double>& db, double bin_hz, double lo_hz, double hi_hz) {
  double m = -1e300;
  for (std::size_t k = 0; k < db.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= lo_hz && f <= hi_hz) m = std::max(m, db[k]);
  }
  return m;
}

double band_sum(const std::vector<double>& p, double bin_hz, double lo_hz, double hi_hz) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= lo_hz && f < hi_hz) s += p[k];
  }
  return s;
}

constexpr double kSpectrumFloor = 1e-20;

double power_db(double p) { return 10.0 * std::log10(std::max(p, kSpectrumFloor)); }

struct RunStats {
  std::size_t count = 0;
  double mean_s = 0.0;
  double stddev_s = 0.0;
};

RunStats run_stats(const std::vector<bool>& flags, bool which, double hop_s) {
  std::vector<double> lens;
  std::size_t i = 0;
  while (i < flags.size()) {
    if (flags[i] != which) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < flags.size() && flags[j] == which) ++j;
    lens.push_back(static_cast<double>(j - i) * hop_s);
    i = j;
  }
  RunStats r;
  r.count = lens.size();
  if (!lens.empty()) {
    r.mean_s = mean_or_zero(lens);
    r.stddev_s = population_stddev(lens);
  }
  return r;
}

}  // namespace

std::string_view to_string(FeatureSetId id) {
  switch (id) {
    case FeatureSetId::filterbank24: return "filterbank24";
    case FeatureSetId::mfcc13: return "mfcc13";
    case FeatureSetId::plp13: return "plp13";
    case FeatureSetId::gemaps_lite: return "gemaps_lite";
  }
  return "?";
}

FeatureSetId feature_set_from_string(std::string_view s) {
  for (auto id : kAllFeatureSets) {
    if (to_string(id) == s) return id;
  }
  throw ValidationError("unknown feature set: " + std::string(s));
}

const std::vector<std::string>& feature_names(FeatureSetId id) {
  switch (id) {
    case FeatureSetId::filterbank24: return kFbankNames;
    case FeatureSetId::mfcc13: return kMfccNames;
    case FeatureSetId::plp13: return kPlpNames;
    case FeatureSetId::gemaps_lite: return kGemapsNames;
  }
  return kMfccNames;
}

std::size_t feature_set_dimension(FeatureSetId id) { return feature_names(id).size(); }

const std::vector<std::string>& gemaps_level_dependent_dims() {
  static const std::vector<std::string> dims{
      "loudness_sma3_amean", "loudness_sma3_stddevNorm", "loudness_sma3_percentile20.0",
      "loudness_sma3_percentile50.0", "loudness_sma3_percentile80.0"};
  return dims;
}

double FeatureVector::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw ValidationError("feature " + std::string(name) + " not in vector");
}

std::size_t PitchContour::voiced_count() const {
  return static_cast<std::size_t>(
      std::count_if(f0_semitone.begin(), f0_semitone.end(), [](const auto& v) { return v.has_value(); }));
}

double hz_to_semitone(double f0_hz) { return 12.0 * std::log2(f0_hz / 27.5); }

std::vector<double> log_mel_frames(const SpectralFrameSeq& spec, std::size_t n_bands) {
  require_frames(spec, "mel_filterbank");
  const auto w = mel_weights(spec.n_bins, spec.bin_hz, n_bands);
  std::vector<double> out(spec.n_frames * n_bands);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    const auto frame = spec.frame(f);
    for (std::size_t m = 0; m < n_bands; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < spec.n_bins; ++k) e += w[m][k] * frame[k];
      out[f * n_bands + m] = std::log(std::max(e, kLogFloorEpsilon));
    }
  }
  return out;
}

FeatureVector mel_filterbank(const SpectralFrameSeq& spec, std::size_t n_bands) {
  const auto frames = log_mel_frames(spec, n_bands);
  std::vector<double> mean(n_bands, 0.0);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    for (std::size_t m = 0; m < n_bands; ++m) mean[m] += frames[f * n_bands + m];
  }
  for (double& v : mean) v /= static_cast<double>(spec.n_frames);
  if (n_bands != 24) {
    FeatureVector v;
    v.set_id = FeatureSetId::filterbank24;
    v.names = numbered("fbank_", n_bands);
    v.values = std::move(mean);
    return v;
  }
  return make_vector(FeatureSetId::filterbank24, std::move(mean));
}

std::vector<double> dct2(std::span<const double> x, std::size_t n_out) {
  const std::size_t n = x.size();
  std::vector<double> c(n_out, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                             static_cast<double>(n));
    }
    c[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return c;
}

FeatureVector mfcc(const SpectralFrameSeq& spec) {
  constexpr std::size_t kBands = 24, kCoeffs = 13;
  const auto frames = log_mel_frames(spec, kBands);
  std::vector<double> mean(kCoeffs, 0.0);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    const auto c = dct2(std::span<const double>(frames.data() + f * kBands, kBands), kCoeffs);
    for (std::size_t k = 0; k < kCoeffs; ++k) mean[k] += c[k];
  }
  for (double& v : mean) v /= static_cast<double>(spec.n_frames);
  return make_vector(FeatureSetId::mfcc13, std::move(mean));
}

double bark(double hz) { return 6.0 * std::asinh(hz / 600.0); }

namespace {

struct BarkBank {
  std::vector<std::vector<double>> weights;  // band x bin
  std::vector<double> equal_loudness;       // per band
  std::vector<double> centers_hz;
};

BarkBank bark_bank(std::size_t n_bins, double bin_hz) {
  const double nyquist = static_cast<double>(n_bins - 1) * bin_hz;
  const double nyq_bark = bark(nyquist);
  const auto n_bands = static_cast<std::size_t>(std::ceil(nyq_bark)) + 1;
  const double step = nyq_bark / static_cast<double>(n_bands - 1);
  BarkBank b;
  b.weights.assign(n_bands, std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < n_bands; ++m) {
    const double mid = static_cast<double>(m) * step;
    double sum = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double z = bark(static_cast<double>(k) * bin_hz);
      const double lof = z - mid - 0.5;
      const double hif = z - mid + 0.5;
      // Critical-band masking curve: flat over one bark, +25 dB/bark below,
      // -10 dB/bark above.
      const double w = std::pow(10.0, std::min(0.0, std::min(hif, -2.5 * lof)));
      b.weights[m][k] = w;
      sum += w;
    }
    for (double& w : b.weights[m]) w /= sum;
    const double f = 600.0 * std::sinh(mid / 6.0);
    b.centers_hz.push_back(f);
    const double fsq = f * f;
    const double ftmp = fsq + 1.6e5;
    b.equal_loudness.push_back((fsq / ftmp) * (fsq / ftmp) * ((fsq + 1.44e6) / (fsq + 9.61e6)));
  }
  return b;
}

}  // namespace

std::vector<double> plp_band_centers_hz(std::size_t n_bins, double bin_hz) {
  return bark_bank(n_bins, bin_hz).centers_hz;
}

std::optional<PlpFrame> plp_frame(std::span<const double> power, double bin_hz, std::size_t order) {
  const BarkBank bank = bark_bank(power.size(), bin_hz);
  const std::size_t m_bands = bank.weights.size();
  PlpFrame out;
  out.auditory.resize(m_bands);
  for (std::size_t m = 0; m < m_bands; ++m) {
    double e = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) e += bank.weights[m][k] * power[k];
    out.auditory[m] = std::pow(e * bank.equal_loudness[m], 0.33);
  }
  // The edge bands are unreliable after equal-loudness weighting; copy their
  // neighbours.
  if (m_bands >= 3) {
    out.auditory[0] = out.auditory[1];
    out.auditory[m_bands - 1] = out.auditory[m_bands - 2];
  }

  // Autocorrelation of the auditory spectrum treated as a power spectrum
  // sampled on [0, pi].
  const double span = static_cast<double>(m_bands - 1);
  std::vector<double> r(order + 1, 0.0);
  for (std::size_t lag = 0; lag <= order; ++lag) {
    double acc = out.auditory[0] + (lag % 2 == 0 ? 1.0 : -1.0) * out.auditory[m_bands - 1];
    for (std::size_t m = 1; m + 1 < m_bands; ++m) {
      acc += 2.0 * out.auditory[m] *
             std::cos(std::numbers::pi * static_cast<double>(lag) * static_cast<double>(m) / span);
    }
    r[lag] = acc / (2.0 * span);
  }
  if (!(r[0] > 0.0)) return std::nullopt;

  // Levinson-Durbin.
  std::vector<double> a(order + 1, 0.0);
  a[0] = 1.0;
  out.reflection.assign(order, 0.0);
  double err = r[0];
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc += a[j] * r[i - j];
    const double k = -acc / err;
    out.reflection[i - 1] = k;
    std::vector<double> prev = a;
    for (std::size_t j = 1; j < i; ++j) a[j] = prev[j] + k * prev[i - j];
    a[i] = k;
    err *= 1.0 - k * k;
    if (!(err > 0.0)) return std::nullopt;
  }
  out.lpc = a;
  out.error = err;

  // Cepstrum of the all-pole model err / |A|^2 (c0 = ln err; c_n for 1/A).
  out.cepstrum.assign(order + 1, 0.0);
  out.cepstrum[0] = std::log(err);
  for (std::size_t n = 1; n <= order; ++n) {
    double acc = -a[n];
    for (std::size_t k = 1; k < n; ++k) {
      acc -= (static_cast<double>(k) / static_cast<double>(n)) * out.cepstrum[k] * a[n - k];
    }
    out.cepstrum[n] = acc;
  }
  return out;
}

FeatureVector plp(const SpectralFrameSeq& spec, std::size_t order) {
  require_frames(spec, "plp");
  std::vector<double> mean(order + 1, 0.0);
  std::size_t used = 0;
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    auto frame = plp_frame(spec.frame(f), spec.bin_hz, order);
    if (!frame) continue;
    for (std::size_t k = 0; k <= order; ++k) mean[k] += frame->cepstrum[k];
    ++used;
  }
  if (used == 0) throw ValidationError("plp: every frame has a singular autocorrelation");
  for (double& v : mean) v /= static_cast<double>(used);
  if (order != 12) {
    FeatureVector v;
    v.set_id = FeatureSetId::plp13;
    v.names = numbered("plp_", order + 1);
    v.values = std::move(mean);
    return v;
  }
  return make_vector(FeatureSetId::plp13, std::move(mean));
}

PitchContour f0_contour(const AudioClip& clip, const PitchConfig& config) {
  const FrameLayout l = layout(clip);
  const double sr = clip.sample_rate;
  // Three periods of the lowest pitch.
  const auto width = static_cast<std::size_t>(std::lround(3.0 * sr / config.min_f0_hz));
  const auto min_lag = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / config.max_f0_hz)));
  const auto max_lag = std::min(width / 3, static_cast<std::size_t>(std::ceil(sr / config.min_f0_hz)));
  const auto window = hann_window(width);
  const auto rw = autocorrelation(window, max_lag + 1);

  PitchContour out;
  out.frame_hop_s = static_cast<double>(l.hop) / sr;
  out.f0_semitone.resize(l.n_frames);
  std::vector<double> seg;
  for (std::size_t i = 0; i < l.n_frames; ++i) {
    seg = centred_segment(clip, l, i, width);
    for (std::size_t j = 0; j < width; ++j) seg[j] *= window[j];
    const auto ra = autocorrelation(seg, max_lag + 1);
    if (!(ra[0] > 0.0)) continue;
    std::vector<double> r(max_lag + 2);
    for (std::size_t lag = 0; lag < r.size(); ++lag) r[lag] = (ra[lag] / ra[0]) / (rw[lag] / rw[0]);

    double best_strength = -1e300, best_lag = 0.0, best_r = 0.0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      if (!(r[lag] > r[lag - 1] && r[lag] >= r[lag + 1])) continue;
      const double denom = r[lag - 1] - 2.0 * r[lag] + r[lag + 1];
      double delta = 0.0, peak = r[lag];
      if (denom < 0.0) {
        delta = 0.5 * (r[lag - 1] - r[lag + 1]) / denom;
        peak = r[lag] - 0.25 * (r[lag - 1] - r[lag + 1]) * delta;
      }
      const double tau = static_cast<double>(lag) + delta;
      const double strength = peak - config.octave_cost * std::log2(config.min_f0_hz * tau / sr);
      if (strength > best_strength) {
        best_strength = strength;
        best_lag = tau;
        best_r = peak;
      }
    }
    if (best_lag > 0.0 && best_r >= config.clarity_threshold) {
      const double f0 = sr / best_lag;
      if (f0 >= config.min_f0_hz && f0 <= config.max_f0_hz) out.f0_semitone[i] = hz_to_semitone(f0);
    }
  }
  return out;
}

LoudnessContour loudness_contour(const AudioClip& clip) {
  if (clip.samples.empty()) throw ValidationError("loudness_contour: empty clip");
  const FrameLayout l = layout(clip);
  LoudnessContour out;
  out.frame_hop_s = static_cast<double>(l.hop) / clip.sample_rate;
  out.loudness_db.resize(l.n_frames);
  for (std::size_t i = 0; i < l.n_frames; ++i) {
    const std::size_t lo = i * l.hop;
    const std::size_t hi = std::min(clip.samples.size(), lo + l.len);
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += clip.samples[j] * clip.samples[j];
    const double rms = std::sqrt(acc / static_cast<double>(hi - lo));
    out.loudness_db[i] = rms > 0.0 ? std::max(kLoudnessFloorDb, 20.0 * std::log10(rms)) : kLoudnessFloorDb;
  }
  return out;
}

FeatureVector gemaps_lite(const AudioClip& clip, const PitchConfig& pitch) {
  if (clip.duration_s() < 0.1 - 1e-9) throw ValidationError("gemaps_lite: clip shorter than 100 ms");
  const FrameLayout l = layout(clip);
  const double hop_s = static_cast<double>(l.hop) / clip.sample_rate;
  const double duration = clip.duration_s();

  const PitchContour f0 = f0_contour(clip, pitch);
  const LoudnessContour loud = loudness_contour(clip);
  const std::size_t n = l.n_frames;

  std::vector<bool> voiced(n);
  for (std::size_t i = 0; i < n; ++i) voiced[i] = f0.f0_semitone[i].has_value();

  // Loudness statistics over the smoothed contour.
  const std::vector<double> ls = sma3(loud.loudness_db);
  std::vector<double> l_rise, l_fall;
  accumulate_slopes(ls, hop_s, l_rise, l_fall);

  // F0: smooth within each voiced run, then pool voiced frames.
  std::vector<double> f0_values, f_rise, f_fall;
  for (std::size_t i = 0; i < n;) {
    if (!voiced[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::vector<double> run;
    while (j < n && voiced[j]) run.push_back(*f0.f0_semitone[j++]);
    run = sma3(run);
    accumulate_slopes(run, hop_s, f_rise, f_fall);
    f0_values.insert(f0_values.end(), run.begin(), run.end());
    i = j;
  }

  // Spectral statistics on the pitch analysis windows.
  const auto width = static_cast<std::size_t>(std::lround(3.0 * clip.sample_rate / pitch.min_f0_hz));
  const std::size_t nfft = next_pow2(width);
  const double bin_hz = static_cast<double>(clip.sample_rate) / static_cast<double>(nfft);
  const auto window = hann_window(width);
  std::vector<double> h1a3, hamV, slope0V, slope1V, alphaV, hamUV, slope0UV, slope1UV, alphaUV;
  for (std::size_t i = 0; i < n; ++i) {
    const bool uv_usable = !voiced[i] && loud.loudness_db[i] > kLoudnessFloorDb;
    if (!voiced[i] && !uv_usable) continue;
    auto seg = centred_segment(clip, l, i, width);
    for (std::size_t j = 0; j < width; ++j) seg[j] *= window[j];
    const auto p = frame_power_spectrum(seg, nfft);
    std::vector<double> db(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) db[k] = power_db(p[k]);
    const double ham = band_max(db, bin_hz, 0.0, 2000.0) - band_max(db, bin_hz, 2000.0 + 1e-9, 5000.0);
    const double s0 = regression_slope(db, bin_hz, 0.0, 500.0);
    const double s1 = regression_slope(db, bin_hz, 500.0, 1500.0);
    const double alpha = power_db(band_sum(p, bin_hz, 50.0, 1000.0)) - power_db(band_sum(p, bin_hz, 1000.0, 5000.0));
    if (voiced[i]) {
      const double f0_hz = 27.5 * std::exp2(*f0.f0_semitone[i] / 12.0);
      const double h1 = band_max(db, bin_hz, 0.9 * f0_hz, 1.1 * f0_hz);
      const double a3 = band_max(db, bin_hz, 2300.0, 3500.0);
      h1a3.push_back(h1 - a3);
      hamV.push_back(ham);
      slope0V.push_back(s0);
      slope1V.push_back(s1);
      alphaV.push_back(alpha);
    } else {
      hamUV.push_back(ham);
      slope0UV.push_back(s0);
      slope1UV.push_back(s1);
      alphaUV.push_back(alpha);
    }
  }

  const RunStats vseg = run_stats(voiced, true, hop_s);
  const RunStats useg = run_stats(voiced, false, hop_s);

  FeatureVector out;
  out.set_id = FeatureSetId::gemaps_lite;
  out.names = kGemapsNames;
  out.values.assign(kGemapsNames.size(), 0.0);
  std::map<std::string, double> v;
  auto set_sentinel = [&](const std::string& name) {
    v[name] = 0.0;
    out.sentinel_dims.push_back(name);
  };

  v["loudness_sma3_amean"] = mean_or_zero(ls);
  v["loudness_sma3_stddevNorm"] = stddev_norm(ls);
  v["loudness_sma3_percentile20.0"] = percentile(ls, 20.0);
  v["loudness_sma3_percentile50.0"] = percentile(ls, 50.0);
  v["loudness_sma3_percentile80.0"] = percentile(ls, 80.0);
  v["loudness_sma3_pctlrange0-2"] = v["loudness_sma3_percentile80.0"] - v["loudness_sma3_percentile20.0"];
  v["loudness_sma3_meanRisingSlope"] = mean_or_zero(l_rise);
  v["loudness_sma3_meanFallingSlope"] = mean_or_zero(l_fall);
  v["loudnessPeaksPerSec"] = static_cast<double>(count_peaks(ls, 3.0)) / duration;

  const std::string f0p = "F0semitoneFrom27.5Hz_sma3nz_";
  if (!f0_values.empty()) {
    v[f0p + "amean"] = mean_or_zero(f0_values);
    v[f0p + "stddevNorm"] = stddev_norm(f0_values);
    v[f0p + "percentile20.0"] = percentile(f0_values, 20.0);
    v[f0p + "percentile50.0"] = percentile(f0_values, 50.0);
    v[f0p + "percentile80.0"] = percentile(f0_values, 80.0);
    v[f0p + "pctlrange0-2"] = v[f0p + "percentile80.0"] - v[f0p + "percentile20.0"];
    v[f0p + "meanRisingSlope"] = mean_or_zero(f_rise);
    v[f0p + "meanFallingSlope"] = mean_or_zero(f_fall);
    v["logRelF0-H1-A3_sma3nz_amean"] = mean_or_zero(h1a3);
    v["logRelF0-H1-A3_sma3nz_stddevNorm"] = stddev_norm(h1a3);
    v["hammarbergIndexV_sma3nz_amean"] = mean_or_zero(hamV);
    v["hammarbergIndexV_sma3nz_stddevNorm"] = stddev_norm(hamV);
    v["slopeV0-500_sma3nz_amean"] = mean_or_zero(slope0V);
    v["slopeV0-500_sma3nz_stddevNorm"] = stddev_norm(slope0V);
    v["slopeV500-1500_sma3nz_amean"] = mean_or_zero(slope1V);
    v["slopeV500-1500_sma3nz_stddevNorm"] = stddev_norm(slope1V);
    v["alphaRatioV_sma3nz_amean"] = mean_or_zero(alphaV);
    v["alphaRatioV_sma3nz_stddevNorm"] = stddev_norm(alphaV);
    v["MeanVoicedSegmentLengthSec"] = vseg.mean_s;
    v["StddevVoicedSegmentLengthSec"] = vseg.stddev_s;
  } else {
    for (const char* s : {"amean", "stddevNorm", "percentile20.0", "percentile50.0", "percentile80.0",
                          "pctlrange0-2", "meanRisingSlope", "meanFallingSlope"}) {
      set_sentinel(f0p + s);
    }
    for (const char* s : {"logRelF0-H1-A3_sma3nz_amean", "logRelF0-H1-A3_sma3nz_stddevNorm",
                          "hammarbergIndexV_sma3nz_amean", "hammarbergIndexV_sma3nz_stddevNorm",
                          "slopeV0-500_sma3nz_amean", "slopeV0-500_sma3nz_stddevNorm",
                          "slopeV500-1500_sma3nz_amean", "slopeV500-1500_sma3nz_stddevNorm",
                          "alphaRatioV_sma3nz_amean", "alphaRatioV_sma3nz_stddevNorm",
                          "MeanVoicedSegmentLengthSec", "StddevVoicedSegmentLengthSec"}) {
      set_sentinel(s);
    }
  }
  if (!hamUV.empty()) {
    v["hammarbergIndexUV_sma3nz_amean"] = mean_or_zero(hamUV);
    v["slopeUV0-500_sma3nz_amean"] = mean_or_zero(slope0UV);
    v["slopeUV500-1500_sma3nz_amean"] = mean_or_zero(slope1UV);
    v["alphaRatioUV_sma3nz_amean"] = mean_or_zero(alphaUV);
  } else {
    for (const char* s : {"hammarbergIndexUV_sma3nz_amean", "slopeUV0-500_sma3nz_amean",
                          "slopeUV500-1500_sma3nz_amean", "alphaRatioUV_sma3nz_amean"}) {
      set_sentinel(s);
    }
  }
  v["VoicedSegmentsPerSec"] = static_cast<double>(vseg.count) / duration;
  if (useg.count > 0) {
    v["MeanUnvoicedSegmentLength"] = useg.mean_s;
    v["StddevUnvoicedSegmentLength"] = useg.stddev_s;
  } else {
    set_sentinel("MeanUnvoicedSegmentLength");
    set_sentinel("StddevUnvoicedSegmentLength");
  }

  for (std::size_t i = 0; i < kGemapsNames.size(); ++i) {
    auto it = v.find(kGemapsNames[i]);
    if (it == v.end()) throw Error("gemaps_lite: dimension not computed: " + kGemapsNames[i]);
    out.values[i] = it->second;
  }
  std::sort(out.sentinel_dims.begin(), out.sentinel_dims.end());
  return out;
}

FeatureVector compare_feature_set(const FeatureVector& a, const FeatureVector& b) {
  if (a.set_id != b.set_id) {
    throw ValidationError("compare_feature_set: mismatched feature sets " + std::string(to_string(a.set_id)) +
                          " and " + std::string(to_string(b.set_id)));
  }
  FeatureVector out;
  out.set_id = a.set_id;
  out.clip_id = a.clip_id + "|" + b.clip_id;
  for (const auto& n : a.names) out.names.push_back(n + "_left");
  for (const auto& n : b.names) out.names.push_back(n + "_right");
  out.values = a.values;
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  return out;
}

FeatureVector extract(FeatureSetId id, const AudioClip& clip) {
  const AudioClip c = clip.sample_rate == kCanonicalRate ? clip : to_canonical(clip);
  FeatureVector v;
  switch (id) {
    case FeatureSetId::filterbank24: v = mel_filterbank(power_spectrogram(c)); break;
    case FeatureSetId::mfcc13: v = mfcc(power_spectrogram(c)); break;
    case FeatureSetId::plp13: v = plp(power_spectrogram(c)); break;
    case FeatureSetId::gemaps_lite: v = gemaps_lite(c); break;
  }
  v.clip_id = clip.id;
  for (double x : v.values) {
    if (!std::isfinite(x)) throw Error("non-finite feature value for clip " + clip.id);
  }
  return v;
}

// ---- FeatureStore ----------------------------------------------------------

FeatureStore::FeatureStore(FeatureSetId id) : set_id_(id) {}

void FeatureStore::put(FeatureVector v) {
  if (v.set_id != set_id_) throw ValidationError("FeatureStore: wrong feature set for " + v.clip_id);
  auto it = index_.find(v.clip_id);
  if (it != index_.end()) {
    rows_[it->second] = std::move(v);
    return;
  }
  index_.emplace(v.clip_id, rows_.size());
  rows_.push_back(std::move(v));
}

const FeatureVector* FeatureStore::find(std::string_view clip_id) const {
  auto it = index_.find(clip_id);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

const FeatureVector& FeatureStore::get(std::string_view clip_id) const {
  const auto* v = find(clip_id);
  if (!v) {
    throw ValidationError("no " + std::string(to_string(set_id_)) + " feature row for clip " +
                          std::string(clip_id));
  }
  return *v;
}

void FeatureStore::save(const std::filesystem::path& csv) const {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out << "clip_id";
  for (const auto& n : feature_names(set_id_)) out << ',' << n;
  out << ",sentinel_dims\n";
  for (const auto& row : rows_) {
    out << row.clip_id;
    for (double v : row.values) out << ',' << format_exact(v);
    out << ',' << join(row.sentinel_dims, ";") << '\n';
  }
  if (!out) throw IoError("write failed: " + csv.string());
}

FeatureStore FeatureStore::load(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open feature store " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty feature store " + csv.string());
  auto header = split(line, ',');
  if (header.size() < 3 || header.front() != "clip_id" || header.back() != "sentinel_dims") {
    throw ValidationError("bad feature store header in " + csv.string());
  }
  std::vector<std::string> names(header.begin() + 1, header.end() - 1);
  std::optional<FeatureSetId> id;
  for (auto candidate : kAllFeatureSets) {
    if (feature_names(candidate) == names) id = candidate;
  }
  if (!id) throw ValidationError("feature store header matches no feature set: " + csv.string());
  FeatureStore store(*id);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw ValidationError(csv.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    FeatureVector v;
    v.set_id = *id;
    v.clip_id = cells[0];
    v.names = names;
    for (std::size_t i = 1; i + 1 < cells.size(); ++i) v.values.push_back(parse_double(cells[i]));
    if (!cells.back().empty()) v.sentinel_dims = split(cells.back(), ';');
    store.put(std::move(v));
  }
  return store;
}

}  // namespace barkscope
