#ifndef BARKSCOPE_SYNTHCORPUS_HPP
#define BARKSCOPE_SYNTHCORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "barkscope/audio.hpp"
#include "barkscope/manifest.hpp"
#include "barkscope/rng.hpp"

namespace barkscope {

struct SynthGroup {
  LangEnv lang_env = LangEnv::En;
  double planted_f0_hz = 300.0;
  double planted_am_rate_hz = 4.0;
  double planted_loudness_db = -20.0;  // burst RMS, dBFS
};

struct Formant {
  double center_hz;
  double bandwidth_hz;
};

// Matched host-speech clips, one video per dog clip. Their F0 (in semitones)
// and AM rate are built to have exactly `correlation` sample correlation with
// the dog clips' planted values.
struct HostSpec {
  bool enabled = true;
  std::size_t clips_per_video = 1;
  double f0_hz = 160.0;
  double f0_spread_st = 1.5;
  double am_rate_hz = 4.5;
  double am_rate_spread_hz = 0.5;
  double loudness_db = -22.0;
  double correlation = 0.6;
  std::size_t n_bursts = 6;
};

struct SynthSpec {
  std::size_t n_clips_per_group = 20;
  std::vector<SynthGroup> groups;
  std::size_t n_bursts = 4;    // words per dog clip
  double duty = 0.5;           // burst share of each AM period
  double ramp_s = 0.01;
  double noise_snr_db = 30.0;  // burst RMS over noise RMS
  // Per-clip jitter around the group values.
  double f0_jitter_rel = 0.03;
  double rate_jitter_rel = 0.03;
  double loudness_jitter_db = 1.0;
  std::size_t n_contexts = 8;  // context prototypes shared across groups
  double activity_noise = 0.05;
  std::vector<std::string> locations{"home", "park", "street", "yard"};
  HostSpec host;
  bool write_annotations = false;
  int sample_rate = kCanonicalRate;
  std::uint64_t seed = 1;

  void validate() const;
};

struct BurstParams {
  double f0_hz = 300.0;
  double am_rate_hz = 4.0;
  double loudness_db = -20.0;
  std::size_t n_bursts = 4;
  double duty = 0.5;
  double ramp_s = 0.01;
  double noise_snr_db = 30.0;  // infinity for a clean signal
  std::vector<Formant> formants{{1200.0, 400.0}, {3000.0, 600.0}};
  int sample_rate = kCanonicalRate;
};

// Harmonic bursts at the AM rate; the clip lasts exactly n_bursts periods
// and the first burst starts at t = 0.
AudioClip synthesize_bursts(const BurstParams& p, Rng& rng);
std::vector<std::pair<double, double>> burst_spans(const BurstParams& p);

// Standardized y with sample correlation exactly rho against x.
std::vector<double> planted_partner(const std::vector<double>& x, double rho, Rng& rng);

struct SynthClipTruth {
  std::string id;
  VocalizerKind kind = VocalizerKind::dog_vocal;
  LangEnv lang_env = LangEnv::En;
  double f0_hz = 0.0;
  double am_rate_hz = 0.0;
  double loudness_db = 0.0;
  std::size_t n_bursts = 0;
  double duration_s = 0.0;
  std::vector<std::pair<double, double>> word_boundaries_s;
  std::string source_video_id;
  int context_prototype = -1;
};

struct SynthResult {
  Manifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path truth_path;
  std::map<std::string, SynthClipTruth> truth;
};

SynthResult generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

nlohmann::json truth_to_json(const SynthSpec& spec, const std::map<std::string, SynthClipTruth>& truth);

}  // namespace barkscope

#endif  // BARKSCOPE_SYNTHCORPUS_HPP
