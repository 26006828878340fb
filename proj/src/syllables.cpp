#include "barkscope/syllables.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "barkscope/error.hpp"
#include "barkscope/stats.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

void OscillatorConfig::validate() const {
  if (!(natural_freq_hz > 0.0)) throw ValidationError("oscillator natural frequency must be positive");
  if (!(damping_ratio > 0.0 && damping_ratio < 1.0)) throw ValidationError("oscillator damping ratio must be in (0, 1)");
  if (!(envelope_rate_hz > 0.0)) throw ValidationError("envelope rate must be positive");
  if (!(min_peak_gap_s > 0.0)) throw ValidationError("min_peak_gap_s must be positive");
  if (!(peak_floor_rel > 0.0 && peak_floor_rel < 1.0)) throw ValidationError("peak_floor_rel must be in (0, 1)");
  if (!(compression_gain > 0.0)) throw ValidationError("compression gain must be positive");
}

std::vector<double> compress_drive(std::span<const double> env, double gain) {
  std::vector<double> out(env.size(), 0.0);
  double peak = 0.0;
  for (double v : env) peak = std::max(peak, v);
  if (!(peak > 0.0)) return out;
  for (std::size_t i = 0; i < env.size(); ++i) out[i] = std::log1p(gain * std::max(0.0, env[i]) / peak);
  return out;
}

std::vector<double> oscillate_linear(std::span<const double> drive, double rate_hz, const OscillatorConfig& config) {
  config.validate();
  if (!(rate_hz >= 4.0 * config.natural_freq_hz)) {
    throw ValidationError("envelope rate must be at least 4x the oscillator frequency");
  }
  const double w = 2.0 * std::numbers::pi * config.natural_freq_hz;
  const double z = config.damping_ratio;
  const double T = 1.0 / rate_hz;
  const double sigma = z * w;
  const double wd = w * std::sqrt(1.0 - z * z);
  const double e = std::exp(-sigma * T);
  const double c = std::cos(wd * T);
  const double s = std::sin(wd * T);
  // Phi = exp(A T), A = [[0, 1], [-w^2, -2 z w]]
  const double p00 = e * (c + sigma / wd * s);
  const double p01 = e * s / wd;
  const double p10 = -e * w * w * s / wd;
  const double p11 = e * (c - sigma / wd * s);
  // Gamma = A^-1 (Phi - I) [0, 1]^T
  const double g0 = (-2.0 * z * w * p01 - (p11 - 1.0)) / (w * w);
  const double g1 = p01;

  std::vector<double> out(drive.size());
  double x = 0.0, v = 0.0;
  for (std::size_t k = 0; k < drive.size(); ++k) {
    const double u = drive[k];
    const double xn = p00 * x + p01 * v + g0 * u;
    const double vn = p10 * x + p11 * v + g1 * u;
    x = xn;
    v = vn;
    out[k] = x;
  }
  return out;
}

std::vector<double> oscillate(const EnvelopeSeq& env, const OscillatorConfig& config) {
  config.validate();
  return oscillate_linear(compress_drive(env.values, config.compression_gain), env.rate_hz, config);
}

SyllableUnits pick_nuclei(std::span<const double> osc, double rate_hz, double duration_s,
                          const OscillatorConfig& config) {
  config.validate();
  if (osc.empty()) throw ValidationError("oscillator output is empty");
  if (!(rate_hz > 0.0)) throw ValidationError("rate must be positive");
  SyllableUnits out;
  out.clip_duration_s = duration_s;
  const double peak = *std::max_element(osc.begin(), osc.end());
  if (peak > 0.0) {
    const double floor = config.peak_floor_rel * peak;
    const std::size_t n = osc.size();
    struct Candidate {
      std::size_t index;
      double value;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      // Plateaus count once, at their left edge.
      if (!(osc[i] > osc[i - 1])) continue;
      std::size_t j = i;
      while (j + 1 < n && osc[j + 1] == osc[i]) ++j;
      if (j + 1 >= n || !(osc[j + 1] < osc[i])) continue;
      if (osc[i] < floor) continue;
      const double t = static_cast<double>(i) / rate_hz;
      if (t < config.min_peak_gap_s / 2.0 || t > duration_s - config.min_peak_gap_s / 2.0) continue;
      double left_min = osc[i];
      for (std::size_t k = i; k-- > 0;) {
        if (osc[k] > osc[i]) break;
        left_min = std::min(left_min, osc[k]);
      }
      double right_min = osc[i];
      for (std::size_t k = j + 1; k < n; ++k) {
        if (osc[k] > osc[i]) break;
        right_min = std::min(right_min, osc[k]);
      }
      if (osc[i] - std::max(left_min, right_min) < floor) continue;
      cands.push_back({i, osc[i]});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
    std::vector<std::size_t> kept;
    const double gap_samples = config.min_peak_gap_s * rate_hz;
    for (const Candidate& c : cands) {
      bool ok = true;
      for (std::size_t k : kept) {
        const double dist = std::abs(static_cast<double>(c.index) - static_cast<double>(k));
        if (dist < gap_samples - 1e-9) {
          ok = false;
          break;
        }
      }
      if (ok) kept.push_back(c.index);
    }
    std::sort(kept.begin(), kept.end());
    for (std::size_t k : kept) out.nuclei_times_s.push_back(static_cast<double>(k) / rate_hz);
  }
  out.rate_per_s = duration_s > 0.0 ? static_cast<double>(out.nuclei_times_s.size()) / duration_s : 0.0;
  return out;
}

SyllableUnits detect_syllables(const AudioClip& clip, const OscillatorConfig& config) {
  config.validate();
  if (clip.samples.empty()) {
    SyllableUnits empty;
    return empty;
  }
  const EnvelopeSeq env = amplitude_envelope(clip, config.envelope_rate_hz);
  return pick_nuclei(oscillate(env, config), env.rate_hz, clip.duration_s(), config);
}

double ClipSpeed::rate_per_s() const {
  if (syllable_count && units.clip_duration_s > 0.0) return *syllable_count / units.clip_duration_s;
  return units.rate_per_s;
}

std::string speed_group(VocalizerKind kind, LangEnv env) {
  return std::string(to_string(kind)) + "/" + std::string(to_string(env));
}

std::vector<std::string> default_speed_groups() {
  return {speed_group(VocalizerKind::dog_vocal, LangEnv::En), speed_group(VocalizerKind::dog_vocal, LangEnv::Ja),
          speed_group(VocalizerKind::host_speech, LangEnv::En), speed_group(VocalizerKind::host_speech, LangEnv::Ja)};
}

SpeedReport speed_report(std::vector<ClipSpeed> clips, const std::vector<std::string>& groups, double bin_width,
                         double max_rate) {
  if (!(bin_width > 0.0) || !(max_rate > 0.0)) throw ValidationError("histogram bins must be positive");
  SpeedReport rep;
  const auto n_bins = static_cast<std::size_t>(std::ceil(max_rate / bin_width - 1e-9));
  for (std::size_t b = 0; b <= n_bins; ++b) rep.bin_edges.push_back(static_cast<double>(b) * bin_width);
  for (const std::string& g : groups) {
    GroupSpeed gs;
    gs.group = g;
    gs.histogram.assign(n_bins, 0);
    std::vector<double> rates;
    for (const ClipSpeed& c : clips) {
      if (c.group != g) continue;
      const double r = c.rate_per_s();
      rates.push_back(r);
      const auto b = std::min(n_bins - 1, static_cast<std::size_t>(std::max(0.0, r) / bin_width));
      ++gs.histogram[b];
    }
    gs.n = rates.size();
    if (!rates.empty()) {
      gs.mean_rate = mean(rates);
      gs.median_rate = median(rates);
      gs.stddev = population_stddev(rates);
    }
    rep.groups.push_back(std::move(gs));
  }
  std::stable_sort(clips.begin(), clips.end(), [](const ClipSpeed& a, const ClipSpeed& b) { return a.clip_id < b.clip_id; });
  rep.clips = std::move(clips);
  return rep;
}

std::string speed_csv(const SpeedReport& report) {
  std::ostringstream out;
  out << "group,n,mean_rate,median_rate,stddev\n";
  for (const GroupSpeed& g : report.groups) {
    out << g.group << ',' << g.n << ',';
    if (g.n == 0) {
      out << "NA,NA,NA\n";
    } else {
      out << format_fixed(g.mean_rate, 4) << ',' << format_fixed(g.median_rate, 4) << ',' << format_fixed(g.stddev, 4)
          << '\n';
    }
  }
  return out.str();
}

std::string speed_histogram_csv(const SpeedReport& report) {
  std::ostringstream out;
  out << "group,bin_lo,bin_hi,count\n";
  for (const GroupSpeed& g : report.groups) {
    for (std::size_t b = 0; b < g.histogram.size(); ++b) {
      out << g.group << ',' << format_fixed(report.bin_edges[b], 2) << ',' << format_fixed(report.bin_edges[b + 1], 2)
          << ',' << g.histogram[b] << '\n';
    }
  }
  return out.str();
}

std::string nuclei_jsonl(const SpeedReport& report) {
  std::string out;
  for (const ClipSpeed& c : report.clips) {
    nlohmann::json j{{"clip_id", c.clip_id},
                     {"group", c.group},
                     {"duration_s", c.units.clip_duration_s},
                     {"rate_per_s", c.rate_per_s()},
                     {"nuclei_times_s", c.units.nuclei_times_s}};
    if (c.syllable_count) j["syllable_count"] = *c.syllable_count;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace barkscope
