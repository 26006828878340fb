#include "barkscope/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "barkscope/error.hpp"
#include "barkscope/pairing.hpp"
#include "barkscope/parallel.hpp"
#include "barkscope/rng.hpp"
#include "barkscope/stats.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  Sha256& update(std::string_view data) {
    EVP_DigestUpdate(ctx_.get(), data.data(), data.size());
    // Field separator so ("ab","c") and ("a","bc") differ.
    const char sep = '\x1f';
    EVP_DigestUpdate(ctx_.get(), &sep, 1);
    return *this;
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

const char* kSegmentsFile = "segments.jsonl";
const char* kPairsFile = "pairs.csv";
const char* kPairsSummaryFile = "pairs_summary.json";
const char* kGridFile = "grid.csv";
const char* kCvFile = "cv_reports.json";
const char* kAttributionFile = "attribution.csv";
const char* kCorrelationFile = "correlation.csv";
const char* kExplainStatusFile = "explain_status.json";
const char* kSpeedFile = "speed.csv";
const char* kSpeedHistFile = "speed_histogram.csv";
const char* kNucleiFile = "nuclei.jsonl";
const char* kStatsFile = "stats.csv";
const char* kSceneFile = "scene_shares.csv";
const char* kLedgerFile = "ledger.json";
const char* kReportDir = "report";

std::string dog_features_file(FeatureSetId id) { return "features/" + std::string(to_string(id)) + ".csv"; }
std::string host_features_file() { return "features/host_" + std::string(to_string(FeatureSetId::gemaps_lite)) + ".csv"; }

json span_json(const EventSpan& s) {
  return json{{"label", s.label}, {"start_s", s.start_s}, {"end_s", s.end_s}, {"confidence", s.confidence}};
}

json spans_json(const std::vector<EventSpan>& spans) {
  json a = json::array();
  for (const EventSpan& s : spans) a.push_back(span_json(s));
  return a;
}

void write_out(const fs::path& out, const std::string& rel, std::string_view content) {
  const fs::path p = out / rel;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  write_file(p, content);
}

AudioClip load_clip(const ClipRecord& r) {
  AudioClip c = to_canonical(load_audio(r.audio_path));
  c.id = r.id;
  return c;
}

template <typename T>
void set_if(const json& j, const char* key, T& target, std::vector<std::string>& seen) {
  if (j.contains(key)) {
    target = j.at(key).get<T>();
    seen.emplace_back(key);
  }
}

void reject_unknown(const json& block, const std::string& name, const std::vector<std::string>& known) {
  for (auto it = block.begin(); it != block.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ValidationError("unknown key '" + it.key() + "' in defaults." + name);
    }
  }
}

struct Runner {
  Manifest manifest;
  fs::path out;
  PipelineOptions opt;
  RunLedger previous;
  RunLedger current;
  std::set<Stage> requested;
  std::map<std::string, std::string> audio_hash;

  std::vector<const ClipRecord*> clips_of(VocalizerKind k) const {
    std::vector<const ClipRecord*> v;
    for (const ClipRecord& r : manifest.clips) {
      if (r.kind == k) v.push_back(&r);
    }
    return v;
  }

  std::vector<FeatureSetId> dog_sets() const {
    std::vector<FeatureSetId> sets = opt.feature_sets;
    for (FeatureSetId id : {opt.explain_set, FeatureSetId::gemaps_lite}) {
      if (std::find(sets.begin(), sets.end(), id) == sets.end()) sets.push_back(id);
    }
    return sets;
  }

  const std::string& hash_audio(const ClipRecord& r) {
    auto it = audio_hash.find(r.id);
    if (it == audio_hash.end()) {
      try {
        it = audio_hash.emplace(r.id, sha256_file(r.audio_path)).first;
      } catch (const Error& e) {
        throw ValidationError(std::string("clip ") + r.id + ": " + e.what());
      }
    }
    return it->second;
  }

  std::string file_hash(const std::string& rel) const {
    const fs::path p = out / rel;
    return fs::exists(p) ? sha256_file(p) : std::string("absent");
  }

  std::vector<std::string> outputs(Stage s) const {
    switch (s) {
      case Stage::segment: return {kSegmentsFile};
      case Stage::extract: {
        std::vector<std::string> v;
        for (FeatureSetId id : dog_sets()) v.push_back(dog_features_file(id));
        v.push_back(host_features_file());
        return v;
      }
      case Stage::pair: return {kPairsFile, kPairsSummaryFile};
      case Stage::train: {
        std::vector<std::string> v{kGridFile, kCvFile};
        if (opt.save_models) {
          for (FeatureSetId id : opt.feature_sets) {
            for (ModelFamily f : opt.families) {
              v.push_back("models/" + std::string(to_string(id)) + "__" + std::string(short_name(f)) + ".json");
            }
          }
        }
        return v;
      }
      case Stage::explain: return {kExplainStatusFile};
      case Stage::speed: return {kSpeedFile, kSpeedHistFile, kNucleiFile};
      case Stage::report: return {std::string(kReportDir) + "/index.json"};
    }
    return {};
  }

  bool outputs_present(Stage s) const {
    for (const std::string& rel : outputs(s)) {
      if (!fs::exists(out / rel)) return false;
    }
    return true;
  }

  std::string input_hash(Stage s) {
    Sha256 h;
    h.update(to_string(s));
    switch (s) {
      case Stage::segment:
        for (const ClipRecord* r : clips_of(VocalizerKind::dog_vocal)) {
          h.update(r->id).update(hash_audio(*r));
          h.update(r->annotation_path ? sha256_file(*r->annotation_path) : "none");
        }
        break;
      case Stage::extract:
        for (const ClipRecord& r : manifest.clips) h.update(r.id).update(to_string(r.kind)).update(hash_audio(r));
        break;
      case Stage::pair:
        for (const ClipRecord* r : clips_of(VocalizerKind::dog_vocal)) {
          h.update(r->id).update(to_string(r->lang_env));
          if (r->context) {
            h.update(to_string(r->context->scene)).update(r->context->location);
            std::string act;
            for (double v : r->context->activity) act += format_exact(v) + ",";
            h.update(act);
          }
        }
        for (FeatureSetId id : opt.feature_sets) h.update(file_hash(dog_features_file(id)));
        break;
      case Stage::train:
        h.update(file_hash(kPairsFile));
        for (FeatureSetId id : opt.feature_sets) h.update(file_hash(dog_features_file(id)));
        break;
      case Stage::explain:
        for (const ClipRecord& r : manifest.clips) {
          h.update(r.id).update(to_string(r.kind)).update(to_string(r.lang_env)).update(r.source_video_id);
        }
        h.update(file_hash(dog_features_file(opt.explain_set)));
        h.update(file_hash(dog_features_file(FeatureSetId::gemaps_lite)));
        h.update(file_hash(host_features_file()));
        break;
      case Stage::speed:
        for (const ClipRecord& r : manifest.clips) {
          h.update(r.id).update(to_string(r.kind)).update(to_string(r.lang_env)).update(hash_audio(r));
          h.update(r.syllable_count ? format_exact(*r.syllable_count) : "none");
        }
        break;
      case Stage::report:
        h.update(stats_csv(corpus_stats(manifest))).update(scene_share_csv(corpus_stats(manifest)));
        for (const char* f : {kGridFile, kAttributionFile, kCorrelationFile, kSpeedFile, kSpeedHistFile, kNucleiFile}) {
          h.update(file_hash(f));
        }
        break;
    }
    return h.hex();
  }

  std::string config_hash(Stage s) const {
    const json all = opt.to_json();
    json c{{"stage", std::string(to_string(s))}, {"seed", stage_seed(opt.seed, s)}};
    switch (s) {
      case Stage::segment: c["segmentation"] = all.at("segmentation"); break;
      case Stage::extract: c["feature_sets"] = all.at("feature_sets"); c["explain_set"] = all.at("explain_set"); break;
      case Stage::pair:
        c["pairing"] = all.at("pairing");
        c["feature_sets"] = all.at("feature_sets");
        break;
      case Stage::train: c["classify"] = all.at("classify"); c["feature_sets"] = all.at("feature_sets"); break;
      case Stage::explain: c["explain"] = all.at("explain"); c["hyper"] = all.at("classify").at("hyper"); break;
      case Stage::speed: c["syllables"] = all.at("syllables"); break;
      case Stage::report: break;
    }
    return Sha256().update(c.dump()).hex();
  }

  // ---- stages ----

  void run_segment() {
    const auto dogs = clips_of(VocalizerKind::dog_vocal);
    std::vector<std::string> lines(dogs.size());
    parallel_for(dogs.size(), opt.jobs, [&](std::size_t i) {
      const ClipRecord& r = *dogs[i];
      try {
        const AudioClip clip = load_clip(r);
        DetectorSource src;
        if (r.annotation_path) {
          src.kind = DetectorKind::external_annotations;
          src.params["path"] = r.annotation_path->string();
        }
        const SegmentationResult res = segment_clip(clip, src, opt.segmentation);
        lines[i] = json{{"clip_id", r.id},
                        {"events", spans_json(res.events)},
                        {"sentences", spans_json(res.sentences)},
                        {"words", spans_json(res.words)}}
                       .dump();
      } catch (const std::exception& e) {
        throw StageError(Stage::segment, e.what(), r.id);
      }
    });
    std::string text;
    for (const std::string& l : lines) text += l + "\n";
    write_out(out, kSegmentsFile, text);
  }

  void run_extract() {
    const auto sets = dog_sets();
    const std::size_t n = manifest.clips.size();
    std::vector<std::vector<FeatureVector>> rows(n);
    parallel_for(n, opt.jobs, [&](std::size_t i) {
      const ClipRecord& r = manifest.clips[i];
      try {
        const AudioClip clip = load_clip(r);
        if (r.kind == VocalizerKind::dog_vocal) {
          for (FeatureSetId id : sets) rows[i].push_back(extract(id, clip));
        } else {
          rows[i].push_back(extract(FeatureSetId::gemaps_lite, clip));
        }
      } catch (const std::exception& e) {
        throw StageError(Stage::extract, e.what(), r.id);
      }
    });
    for (std::size_t s = 0; s < sets.size(); ++s) {
      FeatureStore store(sets[s]);
      for (std::size_t i = 0; i < n; ++i) {
        if (manifest.clips[i].kind == VocalizerKind::dog_vocal) store.put(rows[i][s]);
      }
      fs::create_directories(out / "features");
      store.save(out / dog_features_file(sets[s]));
    }
    FeatureStore host(FeatureSetId::gemaps_lite);
    for (std::size_t i = 0; i < n; ++i) {
      if (manifest.clips[i].kind == VocalizerKind::host_speech) host.put(rows[i][0]);
    }
    fs::create_directories(out / "features");
    host.save(out / host_features_file());
  }

  void run_pair() {
    std::vector<ClipRecord> dogs;
    for (const ClipRecord* r : clips_of(VocalizerKind::dog_vocal)) dogs.push_back(*r);
    PairingResult res;
    try {
      res = build_pairs(dogs, opt.per_class_quota, stage_seed(opt.seed, Stage::pair), opt.cos_threshold);
    } catch (const std::exception& e) {
      throw StageError(Stage::pair, e.what());
    }
    for (FeatureSetId id : opt.feature_sets) {
      const FeatureStore store = FeatureStore::load(out / dog_features_file(id));
      for (const ClipPair& p : res.pairs) {
        for (const std::string& c : {p.left, p.right}) {
          if (!store.find(c)) throw StageError(Stage::pair, "no " + std::string(to_string(id)) + " features", c);
        }
      }
    }
    save_pairs(out / kPairsFile, res.pairs);
    json summary{{"cos_threshold", opt.cos_threshold}, {"per_class_quota", opt.per_class_quota}};
    for (PairClass c : kAllPairClasses) {
      const auto k = static_cast<std::size_t>(c);
      summary["available"][std::string(to_string(c))] = res.available[k];
      summary["sampled"][std::string(to_string(c))] = res.sampled[k];
    }
    write_out(out, kPairsSummaryFile, summary.dump(2) + "\n");
  }

  void run_train() {
    const std::vector<ClipPair> pairs = load_pairs(out / kPairsFile);
    std::vector<NamedMatrix> sets;
    for (FeatureSetId id : opt.feature_sets) {
      const FeatureStore store = FeatureStore::load(out / dog_features_file(id));
      try {
        sets.push_back({std::string(to_string(id)), pair_dataset(pairs, store)});
      } catch (const std::exception& e) {
        throw StageError(Stage::train, e.what());
      }
    }
    struct Cell {
      std::size_t set;
      ModelFamily family;
    };
    std::vector<Cell> cells;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      for (ModelFamily f : opt.families) cells.push_back({s, f});
    }
    const std::uint64_t seed = stage_seed(opt.seed, Stage::train);
    std::vector<GridCell> grid(cells.size());
    std::vector<std::string> models(cells.size());
    parallel_for(cells.size(), opt.jobs, [&](std::size_t i) {
      const NamedMatrix& m = sets[cells[i].set];
      GridCell& cell = grid[i];
      cell.feature_set = m.feature_set;
      cell.family = cells[i].family;
      try {
        CVReport r = cross_validate(m.data, cell.family, opt.hyper, opt.folds, seed, opt.fold_mode,
                                    static_cast<int>(kNumPairClasses));
        r.feature_set = m.feature_set;
        cell.report = std::move(r);
        if (opt.save_models) {
          models[i] = train(cell.family, m.data, opt.hyper, seed, static_cast<int>(kNumPairClasses)).to_json().dump();
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    });
    write_out(out, kGridFile, grid_csv(grid, opt.families));
    json reports = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const GridCell& c = grid[i];
      json j = c.report ? c.report->to_json()
                        : json{{"feature_set", c.feature_set}, {"family", std::string(to_string(c.family))}};
      if (!c.error.empty()) j["error"] = c.error;
      reports.push_back(std::move(j));
      if (opt.save_models) {
        const std::string rel = "models/" + c.feature_set + "__" + std::string(short_name(c.family)) + ".json";
        write_out(out, rel, models[i].empty() ? json{{"error", c.error}}.dump() + "\n" : models[i] + "\n");
      }
    }
    write_out(out, kCvFile, reports.dump(2) + "\n");
  }

  void run_explain() {
    const std::uint64_t seed = stage_seed(opt.seed, Stage::explain);
    json status = json::object();
    fs::remove(out / kAttributionFile);
    fs::remove(out / kCorrelationFile);

    const FeatureStore dogs = FeatureStore::load(out / dog_features_file(opt.explain_set));
    DesignMatrix dm;
    dm.n_cols = feature_set_dimension(opt.explain_set);
    dm.column_names = feature_names(opt.explain_set);
    for (const ClipRecord* r : clips_of(VocalizerKind::dog_vocal)) {
      const FeatureVector* fv = dogs.find(r->id);
      if (!fv) throw StageError(Stage::explain, "no features", r->id);
      dm.add_row(fv->values, r->lang_env == LangEnv::En ? 0 : 1, r->id);
    }
    try {
      const TrainedModel model = train(opt.explain_family, dm, opt.hyper, seed, 2);
      ShapConfig cfg = opt.shap;
      cfg.sample_size = std::min(cfg.sample_size, dm.n_rows);
      cfg.jobs = opt.jobs;
      const auto rows = mean_abs_shap(model, dm, cfg, seed);
      write_out(out, kAttributionFile, attribution_csv(rows));
      status["attribution"] = "ok";
    } catch (const std::exception& e) {
      status["attribution"] = std::string("error: ") + e.what();
    }

    try {
      const FeatureStore dog_gemaps = FeatureStore::load(out / dog_features_file(FeatureSetId::gemaps_lite));
      const FeatureStore host = FeatureStore::load(out / host_features_file());
      CorrelationInput in{&manifest.clips, &dog_gemaps, &host};
      const auto rows = correlate_pairs(in, feature_names(FeatureSetId::gemaps_lite), seed);
      write_out(out, kCorrelationFile, correlation_csv(rows));
      status["correlation"] = "ok";
    } catch (const std::exception& e) {
      status["correlation"] = std::string("error: ") + e.what();
    }
    write_out(out, kExplainStatusFile, status.dump(2) + "\n");
  }

  void run_speed() {
    const std::size_t n = manifest.clips.size();
    std::vector<ClipSpeed> clips(n);
    parallel_for(n, opt.jobs, [&](std::size_t i) {
      const ClipRecord& r = manifest.clips[i];
      try {
        const AudioClip clip = load_clip(r);
        clips[i] = ClipSpeed{r.id, speed_group(r.kind, r.lang_env), detect_syllables(clip, opt.oscillator),
                             r.syllable_count};
      } catch (const std::exception& e) {
        throw StageError(Stage::speed, e.what(), r.id);
      }
    });
    const SpeedReport rep = speed_report(std::move(clips), default_speed_groups());
    write_out(out, kSpeedFile, speed_csv(rep));
    write_out(out, kSpeedHistFile, speed_histogram_csv(rep));
    write_out(out, kNucleiFile, nuclei_jsonl(rep));
  }

  void run_report() {
    const CorpusStats st = corpus_stats(manifest);
    write_out(out, kStatsFile, stats_csv(st));
    write_out(out, kSceneFile, scene_share_csv(st));
    build_report(out);
  }

  void run_stage(Stage s) {
    switch (s) {
      case Stage::segment: run_segment(); break;
      case Stage::extract: run_extract(); break;
      case Stage::pair: run_pair(); break;
      case Stage::train: run_train(); break;
      case Stage::explain: run_explain(); break;
      case Stage::speed: run_speed(); break;
      case Stage::report: run_report(); break;
    }
  }

  void save_ledger() const {
    RunLedger merged = previous;
    for (const StageRecord& r : current.stages) {
      auto it = std::find_if(merged.stages.begin(), merged.stages.end(),
                             [&](const StageRecord& m) { return m.stage == r.stage; });
      if (it == merged.stages.end()) {
        merged.stages.push_back(r);
      } else {
        *it = r;
      }
    }
    std::sort(merged.stages.begin(), merged.stages.end(),
              [](const StageRecord& a, const StageRecord& b) { return a.stage < b.stage; });
    for (StageRecord& r : merged.stages) r.ran = false;
    write_out(out, kLedgerFile, merged.to_json().dump(2) + "\n");
  }
};

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::segment: return "segment";
    case Stage::extract: return "extract";
    case Stage::pair: return "pair";
    case Stage::train: return "train";
    case Stage::explain: return "explain";
    case Stage::speed: return "speed";
    case Stage::report: return "report";
  }
  return "unknown";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : kAllStages) {
    if (to_string(st) == s) return st;
  }
  throw ValidationError("unknown stage '" + std::string(s) + "'");
}

std::vector<Stage> stage_dependencies(Stage s) {
  switch (s) {
    case Stage::pair: return {Stage::extract};
    case Stage::train: return {Stage::extract, Stage::pair};
    case Stage::explain: return {Stage::extract};
    default: return {};
  }
}

std::uint64_t stage_seed(std::uint64_t seed, Stage s) { return mix_seed(seed, to_string(s)); }

void PipelineOptions::apply_defaults(const nlohmann::json& defaults) {
  if (defaults.is_null()) return;
  if (!defaults.is_object()) throw ValidationError("defaults must be an object");
  try {
    reject_unknown(defaults, "", {"segmentation", "pairing", "classify", "explain", "syllables"});
    std::vector<std::string> seen;
    if (defaults.contains("segmentation")) {
      const json& j = defaults.at("segmentation");
      reject_unknown(j, "segmentation",
                     {"silence_floor_db", "hysteresis_db", "min_sentence_gap_s", "min_word_gap_s", "min_word_len_s",
                      "min_noise_overlap", "envelope_rate_hz", "vocal_labels", "noise_labels"});
      set_if(j, "silence_floor_db", segmentation.silence_floor_db, seen);
      set_if(j, "hysteresis_db", segmentation.hysteresis_db, seen);
      set_if(j, "min_sentence_gap_s", segmentation.min_sentence_gap_s, seen);
      set_if(j, "min_word_gap_s", segmentation.min_word_gap_s, seen);
      set_if(j, "min_word_len_s", segmentation.min_word_len_s, seen);
      set_if(j, "min_noise_overlap", segmentation.min_noise_overlap, seen);
      set_if(j, "envelope_rate_hz", segmentation.envelope_rate_hz, seen);
      set_if(j, "vocal_labels", segmentation.vocal_labels, seen);
      set_if(j, "noise_labels", segmentation.noise_labels, seen);
      segmentation.validate();
    }
    if (defaults.contains("pairing")) {
      const json& j = defaults.at("pairing");
      reject_unknown(j, "pairing", {"cos_threshold", "per_class_quota"});
      set_if(j, "cos_threshold", cos_threshold, seen);
      set_if(j, "per_class_quota", per_class_quota, seen);
    }
    if (defaults.contains("classify")) {
      const json& j = defaults.at("classify");
      reject_unknown(j, "classify", {"folds", "fold_mode", "families", "feature_sets", "hyper"});
      set_if(j, "folds", folds, seen);
      if (j.contains("fold_mode")) {
        const auto m = j.at("fold_mode").get<std::string>();
        if (m == "stratified") {
          fold_mode = FoldMode::stratified;
        } else if (m == "group_by_clip") {
          fold_mode = FoldMode::group_by_clip;
        } else {
          throw ValidationError("unknown fold_mode '" + m + "'");
        }
      }
      if (j.contains("families")) {
        families.clear();
        for (const auto& f : j.at("families")) families.push_back(family_from_string(f.get<std::string>()));
      }
      if (j.contains("feature_sets")) {
        feature_sets.clear();
        for (const auto& f : j.at("feature_sets")) feature_sets.push_back(feature_set_from_string(f.get<std::string>()));
      }
      if (j.contains("hyper")) {
        json merged = hyper;
        merged.update(j.at("hyper"));
        hyper = merged.get<Hyperparameters>();
      }
    }
    if (defaults.contains("explain")) {
      const json& j = defaults.at("explain");
      reject_unknown(j, "explain", {"prominence_cutoff", "sample_size", "background_size", "n_permutations",
                                    "feature_set", "family"});
      set_if(j, "prominence_cutoff", shap.prominence_cutoff, seen);
      set_if(j, "sample_size", shap.sample_size, seen);
      set_if(j, "background_size", shap.background_size, seen);
      set_if(j, "n_permutations", shap.n_permutations, seen);
      if (j.contains("feature_set")) explain_set = feature_set_from_string(j.at("feature_set").get<std::string>());
      if (j.contains("family")) explain_family = family_from_string(j.at("family").get<std::string>());
    }
    if (defaults.contains("syllables")) {
      const json& j = defaults.at("syllables");
      reject_unknown(j, "syllables", {"natural_freq_hz", "damping_ratio", "envelope_rate_hz", "min_peak_gap_s",
                                      "peak_floor_rel", "compression_gain"});
      set_if(j, "natural_freq_hz", oscillator.natural_freq_hz, seen);
      set_if(j, "damping_ratio", oscillator.damping_ratio, seen);
      set_if(j, "envelope_rate_hz", oscillator.envelope_rate_hz, seen);
      set_if(j, "min_peak_gap_s", oscillator.min_peak_gap_s, seen);
      set_if(j, "peak_floor_rel", oscillator.peak_floor_rel, seen);
      set_if(j, "compression_gain", oscillator.compression_gain, seen);
      oscillator.validate();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid defaults: ") + e.what());
  }
}

nlohmann::json PipelineOptions::to_json() const {
  json sets = json::array();
  for (FeatureSetId id : feature_sets) sets.push_back(std::string(barkscope::to_string(id)));
  json fams = json::array();
  for (ModelFamily f : families) fams.push_back(std::string(barkscope::to_string(f)));
  return json{
      {"seed", seed},
      {"feature_sets", sets},
      {"explain_set", std::string(barkscope::to_string(explain_set))},
      {"segmentation",
       {{"silence_floor_db", segmentation.silence_floor_db},
        {"hysteresis_db", segmentation.hysteresis_db},
        {"min_sentence_gap_s", segmentation.min_sentence_gap_s},
        {"min_word_gap_s", segmentation.min_word_gap_s},
        {"min_word_len_s", segmentation.min_word_len_s},
        {"min_noise_overlap", segmentation.min_noise_overlap},
        {"envelope_rate_hz", segmentation.envelope_rate_hz},
        {"vocal_labels", segmentation.vocal_labels},
        {"noise_labels", segmentation.noise_labels}}},
      {"pairing", {{"cos_threshold", cos_threshold}, {"per_class_quota", per_class_quota}}},
      {"classify",
       {{"folds", folds},
        {"fold_mode", std::string(barkscope::to_string(fold_mode))},
        {"families", fams},
        {"hyper", hyper},
        {"save_models", save_models}}},
      {"explain",
       {{"prominence_cutoff", shap.prominence_cutoff},
        {"sample_size", shap.sample_size},
        {"background_size", shap.background_size},
        {"n_permutations", shap.n_permutations},
        {"family", std::string(barkscope::to_string(explain_family))}}},
      {"syllables",
       {{"natural_freq_hz", oscillator.natural_freq_hz},
        {"damping_ratio", oscillator.damping_ratio},
        {"envelope_rate_hz", oscillator.envelope_rate_hz},
        {"min_peak_gap_s", oscillator.min_peak_gap_s},
        {"peak_floor_rel", oscillator.peak_floor_rel},
        {"compression_gain", oscillator.compression_gain}}},
  };
}

CorpusStats corpus_stats(const Manifest& m) {
  CorpusStats st;
  for (VocalizerKind k : {VocalizerKind::dog_vocal, VocalizerKind::host_speech}) {
    KindStats ks;
    ks.kind = std::string(to_string(k));
    std::vector<double> lens;
    std::size_t english = 0;
    for (const ClipRecord& r : m.clips) {
      if (r.kind != k) continue;
      lens.push_back(r.length_s());
      if (r.lang_env == LangEnv::En) ++english;
    }
    ks.n_clips = lens.size();
    if (!lens.empty()) {
      ks.avg_len_s = mean(lens);
      ks.var_len_s = population_variance(lens);
      ks.english_pct = 100.0 * static_cast<double>(english) / static_cast<double>(lens.size());
    }
    st.kinds.push_back(ks);
  }
  for (Scene s : kAllScenes) {
    std::size_t n = 0;
    for (const ClipRecord& r : m.clips) {
      if (r.kind == VocalizerKind::dog_vocal && r.context && r.context->scene == s) ++n;
    }
    st.scene_counts.emplace_back(std::string(to_string(s)), n);
    st.dog_total += n;
  }
  return st;
}

std::string stats_csv(const CorpusStats& s) {
  std::ostringstream out;
  out << "kind,n_clips,avg_len_s,var_len_s,english_pct\n";
  for (const KindStats& k : s.kinds) {
    if (k.n_clips == 0) continue;
    out << k.kind << ',' << k.n_clips << ',' << format_fixed(k.avg_len_s, 2) << ',' << format_fixed(k.var_len_s, 3)
        << ',' << format_fixed(k.english_pct, 2) << '\n';
  }
  return out.str();
}

std::string scene_share_csv(const CorpusStats& s) {
  std::ostringstream out;
  out << "scene,n_clips,share_pct\n";
  for (const auto& [scene, n] : s.scene_counts) {
    const double pct = s.dog_total ? 100.0 * static_cast<double>(n) / static_cast<double>(s.dog_total) : 0.0;
    out << scene << ',' << n << ',' << format_fixed(pct, 2) << '\n';
  }
  return out.str();
}

const StageRecord* RunLedger::find(Stage s) const {
  for (const StageRecord& r : stages) {
    if (r.stage == s) return &r;
  }
  return nullptr;
}

std::vector<Stage> RunLedger::ran() const {
  std::vector<Stage> v;
  for (const StageRecord& r : stages) {
    if (r.ran) v.push_back(r.stage);
  }
  return v;
}

nlohmann::json RunLedger::to_json() const {
  json a = json::array();
  for (const StageRecord& r : stages) {
    a.push_back(json{{"stage", std::string(to_string(r.stage))},
                     {"input_hash", r.input_hash},
                     {"config_hash", r.config_hash},
                     {"output_paths", r.output_paths}});
  }
  return json{{"version", 1}, {"stages", a}};
}

RunLedger RunLedger::from_json(const nlohmann::json& j) {
  RunLedger l;
  for (const json& s : j.at("stages")) {
    StageRecord r;
    r.stage = stage_from_string(s.at("stage").get<std::string>());
    r.input_hash = s.at("input_hash").get<std::string>();
    r.config_hash = s.at("config_hash").get<std::string>();
    r.output_paths = s.at("output_paths").get<std::vector<std::string>>();
    l.stages.push_back(std::move(r));
  }
  return l;
}

RunLedger run_pipeline(const fs::path& manifest_path, const fs::path& out_dir, const PipelineOptions& options,
                       std::vector<Stage> stages) {
  Runner run;
  run.manifest = load_manifest(manifest_path);
  run.out = out_dir;
  run.opt = options;
  if (run.opt.jobs == 0) run.opt.jobs = 1;
  if (stages.empty()) stages.assign(kAllStages.begin(), kAllStages.end());
  std::sort(stages.begin(), stages.end());
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
  run.requested.insert(stages.begin(), stages.end());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw StageError(stages.front(), "cannot create output directory " + out_dir.string());
  }
  {
    const fs::path probe = out_dir / ".write_probe";
    std::ofstream p(probe);
    if (!p) throw StageError(stages.front(), "output directory is not writable: " + out_dir.string());
    p.close();
    fs::remove(probe, ec);
  }
  if (fs::exists(out_dir / kLedgerFile)) {
    try {
      run.previous = RunLedger::from_json(json::parse(read_file(out_dir / kLedgerFile)));
    } catch (const std::exception&) {
      run.previous = RunLedger{};
    }
  }

  for (Stage s : stages) {
    for (Stage dep : stage_dependencies(s)) {
      if (!run.requested.count(dep) && !run.outputs_present(dep)) {
        throw StageError(s, "missing artifacts of dependency stage '" + std::string(to_string(dep)) +
                                "'; run '" + std::string(to_string(dep)) + "' first");
      }
    }
    StageRecord rec;
    rec.stage = s;
    rec.input_hash = run.input_hash(s);
    rec.config_hash = run.config_hash(s);
    rec.output_paths = run.outputs(s);
    const StageRecord* old = run.previous.find(s);
    const bool hit = old && old->input_hash == rec.input_hash && old->config_hash == rec.config_hash &&
                     old->output_paths == rec.output_paths && run.outputs_present(s);
    if (!hit) {
      try {
        run.run_stage(s);
      } catch (const StageError&) {
        throw;
      } catch (const ValidationError& e) {
        throw StageError(s, e.what());
      } catch (const std::exception& e) {
        throw StageError(s, e.what());
      }
      rec.ran = true;
    }
    run.current.stages.push_back(rec);
    run.save_ledger();
  }
  return run.current;
}

nlohmann::json build_report(const fs::path& out_dir) {
  const fs::path dir = out_dir / kReportDir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  struct Section {
    const char* name;
    std::vector<const char*> files;
  };
  const std::vector<Section> sections{{"grid", {kGridFile}},
                                      {"attribution", {kAttributionFile}},
                                      {"correlation", {kCorrelationFile}},
                                      {"speed", {kSpeedFile, kSpeedHistFile, kNucleiFile}}};
  auto copy_in = [&](const char* f) {
    const fs::path src = out_dir / f;
    if (!fs::exists(src)) {
      fs::remove(dir / f, ec);
      return false;
    }
    write_file(dir / f, read_file(src));
    return true;
  };
  json index{{"format", "barkscope-report"}, {"version", 1}};
  json secs = json::array();
  for (const Section& s : sections) {
    bool ok = true;
    json files = json::array();
    for (const char* f : s.files) {
      ok = copy_in(f) && ok;
      files.push_back(f);
    }
    secs.push_back(json{{"name", s.name}, {"files", files}, {"status", ok ? "ok" : "missing"}});
  }
  index["sections"] = secs;
  json corpus = json::array();
  for (const char* f : {kStatsFile, kSceneFile}) {
    if (copy_in(f)) corpus.push_back(f);
  }
  index["corpus"] = corpus;
  write_file(dir / "index.json", index.dump(2) + "\n");
  return index;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[md[i] >> 4];
    out += digits[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

}  // namespace barkscope
