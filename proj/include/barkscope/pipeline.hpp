#ifndef BARKSCOPE_PIPELINE_HPP
#define BARKSCOPE_PIPELINE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "barkscope/classify.hpp"
#include "barkscope/error.hpp"
#include "barkscope/explain.hpp"
#include "barkscope/features.hpp"
#include "barkscope/manifest.hpp"
#include "barkscope/segmentation.hpp"
#include "barkscope/syllables.hpp"

namespace barkscope {

enum class Stage { segment, extract, pair, train, explain, speed, report };
inline constexpr std::array kAllStages{Stage::segment, Stage::extract, Stage::pair,  Stage::train,
                                       Stage::explain, Stage::speed,   Stage::report};
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);
// Stages whose artifacts `s` reads.
std::vector<Stage> stage_dependencies(Stage s);

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitStageFailure = 2;

inline constexpr const char* kOutDirEnv = "BARKSCOPE_OUT";

// A stage failed; carries the stage and, when known, the clip at fault.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what, std::string clip_id = {})
      : Error(std::string(to_string(stage)) + ": " + (clip_id.empty() ? "" : "clip " + clip_id + ": ") + what),
        stage_(stage),
        clip_id_(std::move(clip_id)) {}
  Stage stage() const { return stage_; }
  const std::string& clip_id() const { return clip_id_; }

 private:
  Stage stage_;
  std::string clip_id_;
};

struct PipelineOptions {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::vector<FeatureSetId> feature_sets{kAllFeatureSets.begin(), kAllFeatureSets.end()};
  std::vector<ModelFamily> families{kAllFamilies.begin(), kAllFamilies.end()};
  double cos_threshold = kDefaultCosThreshold;
  std::size_t per_class_quota = 2300;
  int folds = 5;
  FoldMode fold_mode = FoldMode::stratified;
  Hyperparameters hyper;
  SegmentationConfig segmentation;
  OscillatorConfig oscillator;
  ShapConfig shap;
  FeatureSetId explain_set = FeatureSetId::gemaps_lite;
  ModelFamily explain_family = ModelFamily::gradient_boosted_trees;
  bool save_models = true;

  // Overlays the manifest header's "defaults" blocks (segmentation, pairing,
  // classify, explain, syllables); unknown keys are rejected.
  void apply_defaults(const nlohmann::json& defaults);
  nlohmann::json to_json() const;
};

std::uint64_t stage_seed(std::uint64_t seed, Stage s);

struct KindStats {
  std::string kind;
  std::size_t n_clips = 0;
  double avg_len_s = 0.0;
  double var_len_s = 0.0;  // population variance
  double english_pct = 0.0;
};

struct CorpusStats {
  std::vector<KindStats> kinds;  // dog_vocal, host_speech
  std::vector<std::pair<std::string, std::size_t>> scene_counts;  // dog clips per scene, fixed scene order
  std::size_t dog_total = 0;
};

CorpusStats corpus_stats(const Manifest& m);
std::string stats_csv(const CorpusStats& s);        // kind,n_clips,avg_len_s,var_len_s,english_pct
std::string scene_share_csv(const CorpusStats& s);  // scene,n_clips,share_pct

struct StageRecord {
  Stage stage = Stage::segment;
  std::string input_hash;
  std::string config_hash;
  std::vector<std::string> output_paths;  // relative to the out dir
  bool ran = false;                       // false: skipped on a ledger hit
};

struct RunLedger {
  std::vector<StageRecord> stages;

  const StageRecord* find(Stage s) const;
  std::vector<Stage> ran() const;
  nlohmann::json to_json() const;
  static RunLedger from_json(const nlohmann::json& j);
};

// Runs the requested stages (all when empty) in dependency order. A stage
// reruns iff its input or config digest differs from the stored ledger or an
// output is missing. Throws ValidationError for manifest problems and
// StageError for anything else.
RunLedger run_pipeline(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                       const PipelineOptions& options, std::vector<Stage> stages = {});

// Assembles out_dir/report from whatever artifacts exist; absent ones are
// marked missing in report/index.json.
nlohmann::json build_report(const std::filesystem::path& out_dir);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace barkscope

#endif  // BARKSCOPE_PIPELINE_HPP
