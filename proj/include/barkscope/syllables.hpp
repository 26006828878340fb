#ifndef BARKSCOPE_SYLLABLES_HPP
#define BARKSCOPE_SYLLABLES_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "barkscope/audio.hpp"
#include "barkscope/pairing.hpp"

namespace barkscope {

struct OscillatorConfig {
  double natural_freq_hz = 5.0;
  double damping_ratio = 0.3;
  double envelope_rate_hz = 100.0;
  double min_peak_gap_s = 0.08;
  double peak_floor_rel = 0.12;
  double compression_gain = 100.0;

  void validate() const;  // throws ValidationError
};

struct SyllableUnits {
  std::vector<double> nuclei_times_s;
  double clip_duration_s = 0.0;
  double rate_per_s = 0.0;
};

// log(1 + gain * env / max(env)); all zeros for a silent envelope.
std::vector<double> compress_drive(std::span<const double> env, double gain);

// x'' + 2 zeta w x' + w^2 x = u(t), u held constant over each sample
// (exact zero-order-hold discretization), starting at rest.
std::vector<double> oscillate_linear(std::span<const double> drive, double rate_hz, const OscillatorConfig& config);

// Compressed envelope through the oscillator.
std::vector<double> oscillate(const EnvelopeSeq& env, const OscillatorConfig& config);

// Local maxima at or above peak_floor_rel * max in both value and
// prominence, at least min_peak_gap_s apart (higher peaks win) and at least
// half a gap away from either clip edge.
SyllableUnits pick_nuclei(std::span<const double> osc, double rate_hz, double duration_s,
                          const OscillatorConfig& config);

SyllableUnits detect_syllables(const AudioClip& clip, const OscillatorConfig& config = {});

struct ClipSpeed {
  std::string clip_id;
  std::string group;
  SyllableUnits units;
  std::optional<double> syllable_count;  // text-derived override

  double rate_per_s() const;
};

struct GroupSpeed {
  std::string group;
  std::size_t n = 0;
  double mean_rate = 0.0;
  double median_rate = 0.0;
  double stddev = 0.0;  // population
  std::vector<std::size_t> histogram;
};

struct SpeedReport {
  std::vector<GroupSpeed> groups;
  std::vector<double> bin_edges;
  std::vector<ClipSpeed> clips;
};

std::string speed_group(VocalizerKind kind, LangEnv env);
// All four (kind, lang_env) groups in a fixed order.
std::vector<std::string> default_speed_groups();

// Empty groups stay in the report with n = 0.
SpeedReport speed_report(std::vector<ClipSpeed> clips, const std::vector<std::string>& groups,
                         double bin_width = 0.5, double max_rate = 12.5);

std::string speed_csv(const SpeedReport& report);            // group,n,mean_rate,median_rate,stddev
std::string speed_histogram_csv(const SpeedReport& report);  // group,bin_lo,bin_hi,count
std::string nuclei_jsonl(const SpeedReport& report);

}  // namespace barkscope

#endif  // BARKSCOPE_SYLLABLES_HPP
