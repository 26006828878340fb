#ifndef BARKSCOPE_SEGMENTATION_HPP
#define BARKSCOPE_SEGMENTATION_HPP

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "barkscope/audio.hpp"

namespace barkscope {

struct EventSpan {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  double confidence = 1.0;

  double length() const { return end_s - start_s; }
  friend bool operator==(const EventSpan&, const EventSpan&) = default;
};

enum class DetectorKind { external_annotations, energy_baseline };

// The annotation path for external_annotations lives in params["path"].
struct DetectorSource {
  DetectorKind kind = DetectorKind::energy_baseline;
  std::map<std::string, std::string> params;
};

struct SegmentationConfig {
  double silence_floor_db = -35.0;   // relative to clip peak
  double hysteresis_db = 5.0;
  double min_sentence_gap_s = 0.5;
  double min_word_gap_s = 0.06;
  double min_word_len_s = 0.05;
  // Fraction of a sentence that must be covered by speech/music before it is
  // dropped. 0 means any positive overlap.
  double min_noise_overlap = 0.0;
  // Envelope resolution used for boundary decisions.
  double envelope_rate_hz = 200.0;
  std::set<std::string> vocal_labels{"barking"};
  std::set<std::string> noise_labels{"speech", "music"};

  void validate() const;
};

// Parses a detector annotation file: a JSON array of
// {label, start_s, end_s, confidence}.
std::vector<EventSpan> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const std::vector<EventSpan>& spans);

std::vector<EventSpan> detect_events(const AudioClip& clip, const DetectorSource& source,
                                     const SegmentationConfig& config = {});

std::vector<EventSpan> sentence_segments(const std::vector<EventSpan>& events,
                                         const SegmentationConfig& config = {});

std::vector<EventSpan> filter_noisy(const std::vector<EventSpan>& sentences,
                                    const std::vector<EventSpan>& events,
                                    const SegmentationConfig& config = {});

std::vector<EventSpan> word_segments(const AudioClip& clip, const EventSpan& sentence,
                                     const SegmentationConfig& config = {});

struct SegmentationResult {
  std::vector<EventSpan> events;
  std::vector<EventSpan> sentences;  // after noise filtering
  std::vector<EventSpan> words;
};

// detect -> sentences -> noise filter -> words.
SegmentationResult segment_clip(const AudioClip& clip, const DetectorSource& source,
                                const SegmentationConfig& config = {});

}  // namespace barkscope

#endif  // BARKSCOPE_SEGMENTATION_HPP
