#include "barkscope/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "barkscope/error.hpp"

namespace barkscope {
namespace {

using json = nlohmann::json;

constexpr double kDbFloor = -200.0;
// A clip whose loudest envelope window is below this is treated as silent.
constexpr double kAbsoluteSilenceDb = -100.0;
// The activity threshold never sits closer than this to the estimated noise
// floor, so stationary background noise does not read as vocalization.
constexpr double kNoiseMarginDb = 12.0;

double to_db(double rms) { return rms > 0.0 ? std::max(kDbFloor, 20.0 * std::log10(rms)) : kDbFloor; }

struct Thresholds {
  double on = 0.0;
  double off = 0.0;
  bool silent = true;
};

struct EnvelopeDb {
  std::vector<double> db;
  double rate_hz = 0.0;
  double duration_s = 0.0;
};

EnvelopeDb envelope_db(const AudioClip& clip, const SegmentationConfig& config) {
  const double rate = std::min(config.envelope_rate_hz, static_cast<double>(clip.sample_rate));
  const EnvelopeSeq env = amplitude_envelope(clip, rate);
  EnvelopeDb out;
  out.rate_hz = env.rate_hz;
  out.duration_s = clip.duration_s();
  out.db.reserve(env.values.size());
  for (double v : env.values) out.db.push_back(to_db(v));
  return out;
}

Thresholds thresholds(const EnvelopeDb& env, const SegmentationConfig& config) {
  Thresholds t;
  if (env.db.empty()) return t;
  const double peak = *std::max_element(env.db.begin(), env.db.end());
  if (peak < kAbsoluteSilenceDb) return t;
  std::vector<double> sorted = env.db;
  const auto k = sorted.size() / 10;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double noise = sorted[k];
  t.on = std::min(std::max(peak + config.silence_floor_db, noise + kNoiseMarginDb),
                  peak - config.hysteresis_db - 1.0);
  t.off = t.on - config.hysteresis_db;
  t.silent = false;
  return t;
}

struct Run {
  std::size_t begin;  // first active window
  std::size_t end;    // one past last active window
  double peak_db;
};

// Hysteresis activity detection over windows [lo, hi).
std::vector<Run> active_runs(const EnvelopeDb& env, const Thresholds& t, std::size_t lo,
                             std::size_t hi) {
  std::vector<Run> runs;
  if (t.silent) return runs;
  bool active = false;
  Run cur{};
  for (std::size_t i = lo; i < hi; ++i) {
    const double v = env.db[i];
    if (!active && v >= t.on) {
      active = true;
      cur = Run{i, i + 1, v};
      // Walk back over the rising edge down to the release threshold.
      while (cur.begin > lo && env.db[cur.begin - 1] >= t.off &&
             (runs.empty() || cur.begin - 1 >= runs.back().end)) {
        --cur.begin;
      }
    } else if (active) {
      if (v < t.off) {
        active = false;
        runs.push_back(cur);
      } else {
        cur.end = i + 1;
        cur.peak_db = std::max(cur.peak_db, v);
      }
    }
  }
  if (active) runs.push_back(cur);
  return runs;
}

double window_time(const EnvelopeDb& env, std::size_t i) {
  return std::min(env.duration_s, static_cast<double>(i) / env.rate_hz);
}

}  // namespace

void SegmentationConfig::validate() const {
  if (!(silence_floor_db < 0.0)) throw ValidationError("silence_floor_db must be negative");
  if (!(min_word_len_s > 0.0)) throw ValidationError("min_word_len_s must be positive");
  if (!(min_word_gap_s >= 0.0) || !(min_sentence_gap_s >= 0.0)) {
    throw ValidationError("gap thresholds must be non-negative");
  }
  if (min_word_gap_s > min_sentence_gap_s) {
    throw ValidationError("min_word_gap_s must not exceed min_sentence_gap_s");
  }
  if (!(hysteresis_db >= 0.0)) throw ValidationError("hysteresis_db must be non-negative");
  if (!(envelope_rate_hz > 0.0)) throw ValidationError("envelope_rate_hz must be positive");
  if (min_noise_overlap < 0.0 || min_noise_overlap > 1.0) {
    throw ValidationError("min_noise_overlap must be in [0, 1]");
  }
}

std::vector<EventSpan> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing annotation file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("ill-formed annotation file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw ValidationError("annotation file must hold a JSON array: " + path.string());
  std::vector<EventSpan> spans;
  std::size_t idx = 0;
  for (const auto& item : doc) {
    const std::string where = path.string() + "[" + std::to_string(idx++) + "]";
    if (!item.is_object() || !item.contains("label") || !item.contains("start_s") ||
        !item.contains("end_s") || !item["label"].is_string() || !item["start_s"].is_number() ||
        !item["end_s"].is_number()) {
      throw ValidationError("ill-formed annotation entry " + where);
    }
    EventSpan s;
    s.label = item["label"].get<std::string>();
    s.start_s = item["start_s"].get<double>();
    s.end_s = item["end_s"].get<double>();
    s.confidence = item.contains("confidence") ? item["confidence"].get<double>() : 1.0;
    if (!(s.start_s >= 0.0) || !(s.end_s > s.start_s)) {
      throw ValidationError("annotation span must satisfy 0 <= start < end: " + where);
    }
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
      throw ValidationError("annotation confidence outside [0,1]: " + where);
    }
    spans.push_back(std::move(s));
  }
  return spans;
}

void save_annotations(const std::filesystem::path& path, const std::vector<EventSpan>& spans) {
  json doc = json::array();
  for (const auto& s : spans) {
    doc.push_back({{"label", s.label}, {"start_s", s.start_s}, {"end_s", s.end_s},
                   {"confidence", s.confidence}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

std::vector<EventSpan> detect_events(const AudioClip& clip, const DetectorSource& source,
                                     const SegmentationConfig& config) {
  std::vector<EventSpan> spans;
  const double duration = clip.duration_s();
  if (source.kind == DetectorKind::external_annotations) {
    auto it = source.params.find("path");
    if (it == source.params.end()) {
      throw ValidationError("external_annotations detector needs params[\"path\"]");
    }
    spans = load_annotations(it->second);
    for (auto& s : spans) {
      if (s.start_s >= duration) {
        throw ValidationError("annotation span " + s.label + " starts beyond clip duration in " +
                              it->second);
      }
      s.end_s = std::min(s.end_s, duration);
    }
  } else {
    const EnvelopeDb env = envelope_db(clip, config);
    const Thresholds t = thresholds(env, config);
    for (const Run& r : active_runs(env, t, 0, env.db.size())) {
      EventSpan s;
      s.label = "barking";
      s.start_s = window_time(env, r.begin);
      s.end_s = window_time(env, r.end);
      s.confidence = std::clamp((r.peak_db - t.off) / 30.0, 0.0, 1.0);
      if (s.length() >= config.min_word_len_s / 2.0) spans.push_back(std::move(s));
    }
  }
  std::stable_sort(spans.begin(), spans.end(),
                   [](const EventSpan& a, const EventSpan& b) { return a.start_s < b.start_s; });
  return spans;
}

std::vector<EventSpan> sentence_segments(const std::vector<EventSpan>& events,
                                         const SegmentationConfig& config) {
  std::vector<EventSpan> vocal;
  for (const auto& e : events) {
    if (config.vocal_labels.count(e.label)) vocal.push_back(e);
  }
  std::stable_sort(vocal.begin(), vocal.end(),
                   [](const EventSpan& a, const EventSpan& b) { return a.start_s < b.start_s; });
  std::vector<EventSpan> out;
  for (auto& e : vocal) {
    if (!out.empty() && e.start_s - out.back().end_s < config.min_sentence_gap_s) {
      out.back().end_s = std::max(out.back().end_s, e.end_s);
      out.back().confidence = std::max(out.back().confidence, e.confidence);
    } else {
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<EventSpan> filter_noisy(const std::vector<EventSpan>& sentences,
                                    const std::vector<EventSpan>& events,
                                    const SegmentationConfig& config) {
  std::vector<EventSpan> kept;
  for (const auto& s : sentences) {
    bool noisy = false;
    for (const auto& e : events) {
      if (!config.noise_labels.count(e.label)) continue;
      const double inter = std::min(s.end_s, e.end_s) - std::max(s.start_s, e.start_s);
      if (inter <= 0.0) continue;
      if (config.min_noise_overlap <= 0.0 || inter >= config.min_noise_overlap * s.length()) {
        noisy = true;
        break;
      }
    }
    if (!noisy) kept.push_back(s);
  }
  return kept;
}

std::vector<EventSpan> word_segments(const AudioClip& clip, const EventSpan& sentence,
                                     const SegmentationConfig& config) {
  const EnvelopeDb env = envelope_db(clip, config);
  const Thresholds t = thresholds(env, config);
  const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(sentence.start_s * env.rate_hz)));
  const auto hi = std::min(env.db.size(),
                           static_cast<std::size_t>(std::ceil(sentence.end_s * env.rate_hz)));
  if (lo >= hi) return {};

  std::vector<Run> runs = active_runs(env, t, lo, hi);
  const auto min_gap = static_cast<std::size_t>(std::lround(config.min_word_gap_s * env.rate_hz));
  std::vector<Run> merged;
  for (const Run& r : runs) {
    if (!merged.empty() && r.begin - merged.back().end < min_gap) {
      merged.back().end = r.end;
      merged.back().peak_db = std::max(merged.back().peak_db, r.peak_db);
    } else {
      merged.push_back(r);
    }
  }

  std::vector<EventSpan> words;
  for (const Run& r : merged) {
    EventSpan w;
    w.label = sentence.label;
    w.start_s = std::max(sentence.start_s, window_time(env, r.begin));
    w.end_s = std::min(sentence.end_s, window_time(env, r.end));
    w.confidence = sentence.confidence;
    if (w.length() >= config.min_word_len_s) words.push_back(std::move(w));
  }
  return words;
}

SegmentationResult segment_clip(const AudioClip& clip, const DetectorSource& source,
                                const SegmentationConfig& config) {
  SegmentationResult r;
  r.events = detect_events(clip, source, config);
  r.sentences = filter_noisy(sentence_segments(r.events, config), r.events, config);
  for (const auto& s : r.sentences) {
    auto w = word_segments(clip, s, config);
    r.words.insert(r.words.end(), w.begin(), w.end());
  }
  return r;
}

}  // namespace barkscope
