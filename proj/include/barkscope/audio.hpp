#ifndef BARKSCOPE_AUDIO_HPP
#define BARKSCOPE_AUDIO_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace barkscope {

inline constexpr int kCanonicalRate = 16000;

struct AudioClip {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = kCanonicalRate;
  std::string id;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Power spectrogram, one-sided. Row-major frame x bin.
struct SpectralFrameSeq {
  std::vector<double> power;
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  double frame_hop_s = 0.0;
  double frame_len_s = 0.0;
  double bin_hz = 0.0;

  std::span<const double> frame(std::size_t i) const {
    return {power.data() + i * n_bins, n_bins};
  }
};

struct EnvelopeSeq {
  std::vector<double> values;
  double rate_hz = 0.0;
};

enum class WindowKind { hann, rectangular };

enum class WavEncoding { pcm16, float32 };

// Reads RIFF/WAVE (PCM16 or IEEE float32, one or two channels). Stereo is
// averaged to mono. Throws IoError / ValidationError.
AudioClip load_audio(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::pcm16);

// Windowed-sinc (Kaiser, 64 taps at the lower of the two rates).
AudioClip resample(const AudioClip& clip, int target_rate);

// Brings a clip to the canonical 16 kHz rate.
inline AudioClip to_canonical(const AudioClip& clip) {
  return resample(clip, kCanonicalRate);
}

// Frames of length round(frame_len_s * rate) advanced by round(hop * rate).
// Each frame is windowed and transformed at its own length (no padding), so
// bin_hz = rate / frame_length. Power is |X_k|^2 / N with interior bins
// doubled: the bins of one frame sum to the windowed frame's energy.
SpectralFrameSeq power_spectrogram(const AudioClip& clip, double frame_len_s = 0.025,
                                   double frame_hop_s = 0.010,
                                   WindowKind window = WindowKind::hann);

// Per-window RMS over contiguous windows of sample_rate / rate_hz samples.
// A trailing partial window is kept. `smooth` applies a 3-point moving
// average afterwards.
EnvelopeSeq amplitude_envelope(const AudioClip& clip, double rate_hz,
                               bool smooth = false);

// One-sided normalized power spectrum of an already-windowed frame, zero-
// padded to `fft_size` (>= frame.size()). Bins sum to the frame energy.
std::vector<double> frame_power_spectrum(std::span<const double> frame,
                                         std::size_t fft_size);

// Linear (non-circular) autocorrelation r[0..max_lag] via FFT.
std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag);

std::vector<double> hann_window(std::size_t n);

std::size_t next_pow2(std::size_t n);

// Copies [start_s, end_s) of a clip; clamps to the clip bounds.
AudioClip slice(const AudioClip& clip, double start_s, double end_s);

}  // namespace barkscope

#endif  // BARKSCOPE_AUDIO_HPP
