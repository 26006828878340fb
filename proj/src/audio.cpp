#include "barkscope/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "barkscope/error.hpp"

namespace barkscope {
namespace {

// FFTW's planner is not thread-safe; execution with new arrays is. Plans are
// created once per size and shared.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan forward(std::size_t n) { return get(n, false); }
  fftw_plan inverse(std::size_t n) { return get(n, true); }

  ~PlanCache() {
    for (auto& [key, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  fftw_plan get(std::size_t n, bool inverse) {
    std::lock_guard lock(mu_);
    const auto key = std::make_pair(n, inverse);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* real = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    auto* cplx = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    fftw_plan p = inverse ? fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real, FFTW_ESTIMATE)
                          : fftw_plan_dft_r2c_1d(static_cast<int>(n), real, cplx, FFTW_ESTIMATE);
    fftw_free(real);
    fftw_free(cplx);
    plans_.emplace(key, p);
    return p;
  }

  std::mutex mu_;
  std::map<std::pair<std::size_t, bool>, fftw_plan> plans_;
};

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter>;

std::uint16_t read_u16(const unsigned char* p) { return p[0] | (p[1] << 8); }

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioClip load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ValidationError("not a RIFF/WAVE file: " + where);
  }

  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw ValidationError("truncated fmt chunk: " + where);
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = read_u16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }

  if (format == 0) throw ValidationError("missing fmt chunk: " + where);
  if (!data) throw ValidationError("missing data chunk: " + where);
  if (channels < 1 || channels > 2) {
    throw ValidationError("unsupported channel count " + std::to_string(channels) + ": " + where);
  }
  if (rate == 0) throw ValidationError("zero sample rate: " + where);
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw ValidationError("unsupported encoding (format " + std::to_string(format) + ", " +
                          std::to_string(bits) + " bit): " + where);
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t n = data_len / frame_bytes;
  if (n == 0) throw ValidationError("zero-length audio: " + where);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.id = path.stem().string();
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        const std::uint32_t u = read_u32(p);
        float f;
        std::memcpy(&f, &u, sizeof f);
        acc += f;
      }
    }
    const double v = acc / channels;
    if (!std::isfinite(v)) throw ValidationError("non-finite sample in " + where);
    clip.samples[i] = v;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  const bool pcm16 = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, pcm16 ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_len);
  for (double s : clip.samples) {
    if (pcm16) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
    } else {
      const float f = static_cast<float>(s);
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ValidationError("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  constexpr double kHalfTaps = 32.0;
  constexpr double kBeta = 8.0;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.95;
  const double half_width = kHalfTaps / std::min(1.0, ratio);
  const double bessel_beta = std::cyl_bessel_i(0.0, kBeta);

  const auto n_in = static_cast<long long>(clip.samples.size());
  const auto n_out = std::llround(static_cast<double>(n_in) * ratio);

  AudioClip out;
  out.id = clip.id;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long long n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const long long lo = std::max(0LL, static_cast<long long>(std::ceil(t - half_width)));
    const long long hi = std::min(n_in - 1, static_cast<long long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k) {
      const double d = t - static_cast<double>(k);
      const double w = d / half_width;
      const double kaiser = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - w * w))) / bessel_beta;
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * d) * kaiser;
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 1)); }

std::vector<double> frame_power_spectrum(std::span<const double> frame, std::size_t fft_size) {
  if (fft_size < frame.size() || fft_size < 2) {
    throw ValidationError("frame_power_spectrum: fft size smaller than frame");
  }
  fftw_plan plan = PlanCache::instance().forward(fft_size);
  FftwBuffer<double> in(static_cast<double*>(fftw_malloc(sizeof(double) * fft_size)));
  FftwBuffer<fftw_complex> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (fft_size / 2 + 1))));
  std::copy(frame.begin(), frame.end(), in.get());
  std::fill(in.get() + frame.size(), in.get() + fft_size, 0.0);
  fftw_execute_dft_r2c(plan, in.get(), out.get());

  const std::size_t n_bins = fft_size / 2 + 1;
  std::vector<double> power(n_bins);
  const double norm = 1.0 / static_cast<double>(fft_size);
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double re = out[k][0];
    const double im = out[k][1];
    const bool unpaired = k == 0 || (fft_size % 2 == 0 && k == n_bins - 1);
    power[k] = (re * re + im * im) * norm * (unpaired ? 1.0 : 2.0);
  }
  return power;
}

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  if (x.empty()) return r;
  const std::size_t nfft = next_pow2(2 * x.size());
  const std::size_t n_bins = nfft / 2 + 1;
  FftwBuffer<double> real(static_cast<double*>(fftw_malloc(sizeof(double) * nfft)));
  FftwBuffer<fftw_complex> spec(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n_bins)));
  std::copy(x.begin(), x.end(), real.get());
  std::fill(real.get() + x.size(), real.get() + nfft, 0.0);
  fftw_execute_dft_r2c(PlanCache::instance().forward(nfft), real.get(), spec.get());
  for (std::size_t k = 0; k < n_bins; ++k) {
    spec[k][0] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    spec[k][1] = 0.0;
  }
  fftw_execute_dft_c2r(PlanCache::instance().inverse(nfft), spec.get(), real.get());
  const double norm = 1.0 / static_cast<double>(nfft);
  for (std::size_t lag = 0; lag <= max_lag && lag < x.size(); ++lag) r[lag] = real[lag] * norm;
  return r;
}

SpectralFrameSeq power_spectrogram(const AudioClip& clip, double frame_len_s, double frame_hop_s,
                                   WindowKind window) {
  const auto len = static_cast<std::size_t>(std::lround(frame_len_s * clip.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(frame_hop_s * clip.sample_rate));
  if (len < 2) throw ValidationError("power_spectrogram: frame shorter than 2 samples");
  if (hop == 0 || hop > len) throw ValidationError("power_spectrogram: hop must be in (0, frame length]");
  if (clip.samples.size() < len) throw ValidationError("power_spectrogram: clip shorter than one frame");

  const std::vector<double> win =
      window == WindowKind::hann ? hann_window(len) : std::vector<double>(len, 1.0);

  SpectralFrameSeq seq;
  seq.n_frames = (clip.samples.size() - len) / hop + 1;
  seq.n_bins = len / 2 + 1;
  seq.frame_len_s = static_cast<double>(len) / clip.sample_rate;
  seq.frame_hop_s = static_cast<double>(hop) / clip.sample_rate;
  seq.bin_hz = static_cast<double>(clip.sample_rate) / static_cast<double>(len);
  seq.power.resize(seq.n_frames * seq.n_bins);

  std::vector<double> frame(len);
  for (std::size_t f = 0; f < seq.n_frames; ++f) {
    const double* src = clip.samples.data() + f * hop;
    for (std::size_t i = 0; i < len; ++i) frame[i] = src[i] * win[i];
    const auto p = frame_power_spectrum(frame, len);
    std::copy(p.begin(), p.end(), seq.power.begin() + static_cast<std::ptrdiff_t>(f * seq.n_bins));
  }
  return seq;
}

EnvelopeSeq amplitude_envelope(const AudioClip& clip, double rate_hz, bool smooth) {
  if (!(rate_hz > 0.0) || rate_hz > clip.sample_rate) {
    throw ValidationError("amplitude_envelope: rate must be in (0, sample_rate]");
  }
  const auto win = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(clip.sample_rate / rate_hz)));
  const std::size_t n = (clip.samples.size() + win - 1) / win;
  EnvelopeSeq env;
  env.rate_hz = static_cast<double>(clip.sample_rate) / static_cast<double>(win);
  env.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i * win;
    const std::size_t hi = std::min(clip.samples.size(), lo + win);
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += clip.samples[j] * clip.samples[j];
    env.values[i] = std::sqrt(acc / static_cast<double>(hi - lo));
  }
  if (smooth && n >= 3) {
    std::vector<double> s(n);
    s[0] = (env.values[0] + env.values[1]) / 2.0;
    s[n - 1] = (env.values[n - 2] + env.values[n - 1]) / 2.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      s[i] = (env.values[i - 1] + env.values[i] + env.values[i + 1]) / 3.0;
    }
    env.values = std::move(s);
  }
  return env;
}

AudioClip slice(const AudioClip& clip, double start_s, double end_s) {
  const auto n = static_cast<long long>(clip.samples.size());
  const long long lo = std::clamp<long long>(std::llround(start_s * clip.sample_rate), 0, n);
  const long long hi = std::clamp<long long>(std::llround(end_s * clip.sample_rate), lo, n);
  AudioClip out;
  out.id = clip.id;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + lo, clip.samples.begin() + hi);
  return out;
}

}  // namespace barkscope
