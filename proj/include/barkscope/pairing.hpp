#ifndef BARKSCOPE_PAIRING_HPP
#define BARKSCOPE_PAIRING_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "barkscope/features.hpp"
#include "barkscope/matrix.hpp"

namespace barkscope {

enum class Scene { Alone, Bath, Eat, Fight, Play, Run, Stranger, Walk };
inline constexpr std::array kAllScenes{Scene::Alone, Scene::Bath,  Scene::Eat,      Scene::Fight,
                                       Scene::Play,  Scene::Run,   Scene::Stranger, Scene::Walk};
std::string_view to_string(Scene s);
std::optional<Scene> scene_from_string(std::string_view s);

inline constexpr std::size_t kActivityDim = 768;

struct Context {
  Scene scene = Scene::Alone;
  std::string location;
  std::vector<double> activity;  // kActivityDim entries
};

enum class VocalizerKind { dog_vocal, host_speech };
enum class LangEnv { En, Ja };

std::string_view to_string(VocalizerKind k);
std::string_view to_string(LangEnv l);

struct ClipRecord {
  std::string id;
  VocalizerKind kind = VocalizerKind::dog_vocal;
  LangEnv lang_env = LangEnv::En;
  std::filesystem::path audio_path;  // resolved against the manifest directory
  double start_s = 0.0;              // timestamps in the source video
  double end_s = 0.0;
  std::optional<Context> context;    // dog_vocal only
  std::string source_video_id;
  std::optional<double> syllable_count;            // externally supplied (text-derived)
  std::optional<std::filesystem::path> annotation_path;  // detector output for this clip

  double length_s() const { return end_s - start_s; }
};

enum class PairClass : int { EnEn = 0, JaJa = 1, EnJa = 2, JaEn = 3 };
inline constexpr std::size_t kNumPairClasses = 4;
inline constexpr std::array kAllPairClasses{PairClass::EnEn, PairClass::JaJa, PairClass::EnJa,
                                            PairClass::JaEn};
std::string_view to_string(PairClass c);
PairClass pair_class(LangEnv left, LangEnv right);

struct ClipPair {
  std::string left;
  std::string right;
  PairClass label = PairClass::EnEn;

  friend bool operator==(const ClipPair&, const ClipPair&) = default;
};

inline constexpr double kDefaultCosThreshold = 0.95;

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Same scene, same location and activity cosine >= threshold. Throws
// ValidationError on a zero-norm activity vector.
bool context_match(const Context& a, const Context& b, double cos_threshold = kDefaultCosThreshold);

struct PairingResult {
  std::vector<ClipPair> pairs;                       // sorted by (left, right)
  std::array<std::size_t, kNumPairClasses> available{};  // eligible before the quota
  std::array<std::size_t, kNumPairClasses> sampled{};
};

// Ordered context-matched pairs of dog clips, no self-pairs, at most
// per_class_quota per class sampled without replacement. Clips may appear in
// several pairs.
PairingResult build_pairs(const std::vector<ClipRecord>& records, std::size_t per_class_quota,
                          std::uint64_t seed, double cos_threshold = kDefaultCosThreshold);

// Rows [left || right] in (left, right) id order, labels = PairClass.
DesignMatrix pair_dataset(std::vector<ClipPair> pairs, const FeatureStore& features);

void save_pairs(const std::filesystem::path& csv, const std::vector<ClipPair>& pairs);
std::vector<ClipPair> load_pairs(const std::filesystem::path& csv);

}  // namespace barkscope

#endif  // BARKSCOPE_PAIRING_HPP
