#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "barkscope/error.hpp"
#include "barkscope/pipeline.hpp"
#include "barkscope/synthcorpus.hpp"

using namespace barkscope;
namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string manifest;
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::vector<std::string> feature_sets;
  std::vector<std::string> families;
  std::optional<double> cos_threshold;
  std::optional<double> prominence_cutoff;
  std::optional<int> folds;
  std::optional<std::string> fold_mode;
  std::optional<std::size_t> quota;
  std::vector<std::string> stages;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--manifest", f.manifest, "Corpus manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, std::string("Output directory (default $") + kOutDirEnv + ")");
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--feature-set", f.feature_sets, "Feature sets: filterbank24 mfcc13 plp13 gemaps_lite");
  cmd->add_option("--family", f.families, "Model families: gbt knn lr rf");
  cmd->add_option("--cos-threshold", f.cos_threshold, "Activity cosine threshold (default 0.95)");
  cmd->add_option("--prominence-cutoff", f.prominence_cutoff, "Mean |SHAP| cutoff (default 0.04)");
  cmd->add_option("--folds", f.folds, "Cross-validation folds (default 5)");
  cmd->add_option("--fold-mode", f.fold_mode, "stratified or group_by_clip");
  cmd->add_option("--per-class-quota", f.quota, "Pairs sampled per class (default 2300)");
}

PipelineOptions build_options(const Flags& f, const Manifest& m) {
  PipelineOptions opt;
  opt.apply_defaults(m.defaults);
  opt.seed = f.seed;
  opt.jobs = f.jobs;
  if (!f.feature_sets.empty()) {
    opt.feature_sets.clear();
    for (const auto& s : f.feature_sets) opt.feature_sets.push_back(feature_set_from_string(s));
  }
  if (!f.families.empty()) {
    opt.families.clear();
    for (const auto& s : f.families) opt.families.push_back(family_from_string(s));
  }
  if (f.cos_threshold) opt.cos_threshold = *f.cos_threshold;
  if (f.prominence_cutoff) opt.shap.prominence_cutoff = *f.prominence_cutoff;
  if (f.folds) opt.folds = *f.folds;
  if (f.quota) opt.per_class_quota = *f.quota;
  if (f.fold_mode) {
    if (*f.fold_mode == "stratified") {
      opt.fold_mode = FoldMode::stratified;
    } else if (*f.fold_mode == "group_by_clip") {
      opt.fold_mode = FoldMode::group_by_clip;
    } else {
      throw ValidationError("unknown fold mode '" + *f.fold_mode + "'");
    }
  }
  if (opt.folds < 2) throw ValidationError("--folds must be at least 2");
  if (!(opt.cos_threshold >= -1.0 && opt.cos_threshold <= 1.0)) throw ValidationError("--cos-threshold must be in [-1, 1]");
  return opt;
}

fs::path out_dir(const Flags& f) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  throw ValidationError(std::string("no output directory: pass --out or set ") + kOutDirEnv);
}

void print_ledger(const RunLedger& ledger) {
  for (const StageRecord& r : ledger.stages) {
    std::cout << to_string(r.stage) << ": " << (r.ran ? "ran" : "skipped (up to date)") << '\n';
  }
}

int run_stages(const Flags& f, std::vector<Stage> stages) {
  const Manifest m = load_manifest(f.manifest);
  const PipelineOptions opt = build_options(f, m);
  print_ledger(run_pipeline(f.manifest, out_dir(f), opt, std::move(stages)));
  return kExitOk;
}

int cmd_stats(const Flags& f) {
  const Manifest m = load_manifest(f.manifest);
  const CorpusStats st = corpus_stats(m);
  std::cout << stats_csv(st) << '\n' << scene_share_csv(st);
  return kExitOk;
}

struct SynthFlags {
  std::string out;
  std::size_t clips = 20;
  std::uint64_t seed = 1;
  std::vector<double> en{300.0, 3.0, -20.0};
  std::vector<double> ja{420.0, 5.0, -20.0};
  double snr = 30.0;
  std::size_t contexts = 8;
  bool no_host = false;
  bool annotations = false;
};

int cmd_synth(const SynthFlags& s) {
  SynthSpec spec;
  spec.n_clips_per_group = s.clips;
  spec.seed = s.seed;
  spec.noise_snr_db = s.snr;
  spec.n_contexts = s.contexts;
  spec.host.enabled = !s.no_host;
  spec.write_annotations = s.annotations;
  spec.groups = {{LangEnv::En, s.en[0], s.en[1], s.en[2]}, {LangEnv::Ja, s.ja[0], s.ja[1], s.ja[2]}};
  const SynthResult res = generate(spec, s.out);
  std::cout << "wrote " << res.manifest.clips.size() << " clips\n"
            << "manifest: " << res.manifest_path.string() << '\n'
            << "truth: " << res.truth_path.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"barkscope: dog vocalization corpus analysis"};
  app.require_subcommand(1);
  Flags flags;
  SynthFlags synth;

  auto* stats = app.add_subcommand("stats", "Corpus statistics and scene shares");
  stats->add_option("--manifest", flags.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  const std::vector<std::pair<Stage, std::string>> descr{
      {Stage::segment, "Sentence and word segmentation of dog clips"},
      {Stage::extract, "Acoustic feature extraction"},
      {Stage::pair, "Context-matched clip pairing"},
      {Stage::train, "Cross-validated accuracy grid"},
      {Stage::explain, "Shapley attribution and host correlation"},
      {Stage::speed, "Syllable-rate comparison"},
      {Stage::report, "Assemble the report bundle"}};
  for (const auto& [stage, text] : descr) {
    auto* cmd = app.add_subcommand(std::string(to_string(stage)), text);
    add_common(cmd, flags);
    stage_cmds.emplace_back(cmd, stage);
  }

  auto* pipeline = app.add_subcommand("pipeline", "Run stages in dependency order, skipping up-to-date ones");
  add_common(pipeline, flags);
  pipeline->add_option("--stages", flags.stages, "Subset of stages (default all)");

  auto* gen = app.add_subcommand("synth", "Generate a synthetic corpus with planted ground truth");
  gen->add_option("--out", synth.out, "Corpus directory")->required();
  gen->add_option("--clips-per-group", synth.clips, "Dog clips per language group");
  gen->add_option("--seed", synth.seed, "Generator seed");
  gen->add_option("--en", synth.en, "En group: f0_hz am_rate_hz loudness_db")->expected(3);
  gen->add_option("--ja", synth.ja, "Ja group: f0_hz am_rate_hz loudness_db")->expected(3);
  gen->add_option("--snr", synth.snr, "Burst SNR in dB");
  gen->add_option("--contexts", synth.contexts, "Context prototypes");
  gen->add_flag("--no-host", synth.no_host, "Skip host speech");
  gen->add_flag("--annotations", synth.annotations, "Write event annotation files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (stats->parsed()) return cmd_stats(flags);
    if (gen->parsed()) return cmd_synth(synth);
    if (pipeline->parsed()) {
      std::vector<Stage> stages;
      for (const auto& s : flags.stages) stages.push_back(stage_from_string(s));
      return run_stages(flags, stages);
    }
    for (const auto& [cmd, stage] : stage_cmds) {
      if (cmd->parsed()) return run_stages(flags, {stage});
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return kExitStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStageFailure;
  }
  return kExitOk;
}
