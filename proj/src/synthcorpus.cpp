#include "barkscope/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "barkscope/error.hpp"
#include "barkscope/segmentation.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

namespace {

using json = nlohmann::json;

const std::vector<Formant> kHostFormants{{700.0, 300.0}, {1300.0, 400.0}, {2600.0, 500.0}};

double semitone(double hz) { return 12.0 * std::log2(hz / 27.5); }
double from_semitone(double st) { return 27.5 * std::pow(2.0, st / 12.0); }

std::string padded(std::size_t i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return buf;
}

std::vector<double> standardize(std::vector<double> v) {
  const double n = static_cast<double>(v.size());
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= n;
  double ss = 0.0;
  for (double& x : v) {
    x -= mu;
    ss += x * x;
  }
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw ValidationError("cannot standardize a constant vector");
  for (double& x : v) x /= sd;
  return v;
}

}  // namespace

void SynthSpec::validate() const {
  if (groups.empty()) throw ValidationError("synth spec needs at least one group");
  for (const SynthGroup& g : groups) {
    if (!(g.planted_f0_hz > 0.0) || !(g.planted_am_rate_hz > 0.0)) {
      throw ValidationError("planted f0 and AM rate must be positive");
    }
  }
  if (n_bursts < 1) throw ValidationError("need at least one burst per clip");
  if (!(duty > 0.0 && duty < 1.0)) throw ValidationError("duty must be in (0, 1)");
  if (n_contexts < 1) throw ValidationError("need at least one context prototype");
  if (locations.empty()) throw ValidationError("need at least one location");
  if (host.enabled && !(std::abs(host.correlation) <= 1.0)) throw ValidationError("host correlation must be in [-1, 1]");
}

std::vector<std::pair<double, double>> burst_spans(const BurstParams& p) {
  const double period = 1.0 / p.am_rate_hz;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t b = 0; b < p.n_bursts; ++b) {
    const double start = static_cast<double>(b) * period;
    spans.emplace_back(start, start + p.duty * period);
  }
  return spans;
}

AudioClip synthesize_bursts(const BurstParams& p, Rng& rng) {
  if (!(p.f0_hz > 0.0) || !(p.am_rate_hz > 0.0) || p.n_bursts == 0) {
    throw ValidationError("burst parameters must be positive");
  }
  const double sr = p.sample_rate;
  const double duration = static_cast<double>(p.n_bursts) / p.am_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration * sr));
  AudioClip clip;
  clip.sample_rate = p.sample_rate;
  clip.samples.assign(n, 0.0);

  const double top = std::min(0.45 * sr, 7000.0);
  std::vector<double> amp, freq, phase;
  for (int k = 1; k * p.f0_hz < top; ++k) {
    const double f = k * p.f0_hz;
    double shape = 0.1;
    for (const Formant& fm : p.formants) {
      const double z = (f - fm.center_hz) / fm.bandwidth_hz;
      shape += std::exp(-0.5 * z * z);
    }
    amp.push_back(shape / std::sqrt(static_cast<double>(k)));
    freq.push_back(f);
    phase.push_back(2.0 * std::numbers::pi * rng.uniform());
  }

  double energy = 0.0;
  std::size_t on_count = 0;
  for (const auto& [start, end] : burst_spans(p)) {
    const auto lo = static_cast<std::size_t>(std::llround(start * sr));
    const auto hi = std::min(n, static_cast<std::size_t>(std::llround(end * sr)));
    const double len = static_cast<double>(hi - lo);
    const double ramp = std::min(p.ramp_s * sr, len / 2.0);
    for (std::size_t i = lo; i < hi; ++i) {
      const double t = static_cast<double>(i) / sr;
      double v = 0.0;
      for (std::size_t k = 0; k < amp.size(); ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t + phase[k]);
      const double pos = static_cast<double>(i - lo);
      double w = 1.0;
      if (pos < ramp) {
        w = 0.5 - 0.5 * std::cos(std::numbers::pi * pos / ramp);
      } else if (len - pos < ramp) {
        w = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - pos) / ramp);
      }
      clip.samples[i] = w * v;
      energy += v * v;
      ++on_count;
    }
  }
  const double rms = on_count ? std::sqrt(energy / static_cast<double>(on_count)) : 0.0;
  const double target = std::pow(10.0, p.loudness_db / 20.0);
  const double gain = rms > 0.0 ? target / rms : 0.0;
  for (double& s : clip.samples) s *= gain;
  if (std::isfinite(p.noise_snr_db)) {
    const double noise_rms = target * std::pow(10.0, -p.noise_snr_db / 20.0);
    for (double& s : clip.samples) s += noise_rms * rng.normal();
  }
  return clip;
}

std::vector<double> planted_partner(const std::vector<double>& x, double rho, Rng& rng) {
  if (x.size() < 3) throw ValidationError("planted correlation needs at least 3 values");
  const std::vector<double> zx = standardize(x);
  std::vector<double> e(x.size());
  for (double& v : e) v = rng.normal();
  double mu = 0.0;
  for (double v : e) mu += v;
  mu /= static_cast<double>(e.size());
  double proj = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] -= mu;
    proj += e[i] * zx[i];
  }
  proj /= static_cast<double>(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= proj * zx[i];
  e = standardize(std::move(e));
  const double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = rho * zx[i] + c * e[i];
  return y;
}

json truth_to_json(const SynthSpec& spec, const std::map<std::string, SynthClipTruth>& truth) {
  json clips = json::object();
  for (const auto& [id, t] : truth) {
    json spans = json::array();
    for (const auto& [s, e] : t.word_boundaries_s) spans.push_back(json::array({s, e}));
    clips[id] = json{{"kind", std::string(to_string(t.kind))},
                     {"lang_env", std::string(to_string(t.lang_env))},
                     {"f0_hz", t.f0_hz},
                     {"am_rate_hz", t.am_rate_hz},
                     {"loudness_db", t.loudness_db},
                     {"n_bursts", t.n_bursts},
                     {"duration_s", t.duration_s},
                     {"word_boundaries_s", std::move(spans)},
                     {"source_video_id", t.source_video_id},
                     {"context_prototype", t.context_prototype}};
  }
  json groups = json::array();
  for (const SynthGroup& g : spec.groups) {
    groups.push_back(json{{"lang_env", std::string(to_string(g.lang_env))},
                          {"planted_f0_hz", g.planted_f0_hz},
                          {"planted_am_rate_hz", g.planted_am_rate_hz},
                          {"planted_loudness_db", g.planted_loudness_db}});
  }
  return json{{"seed", spec.seed},
              {"groups", std::move(groups)},
              {"noise_snr_db", spec.noise_snr_db},
              {"host_correlation", spec.host.enabled ? json(spec.host.correlation) : json(nullptr)},
              {"clips", std::move(clips)}};
}

SynthResult generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"audio", "activity", "annotations"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  struct Proto {
    Scene scene;
    std::string location;
    std::vector<double> activity;
  };
  std::vector<Proto> protos;
  {
    Rng rng(mix_seed(spec.seed, "contexts"));
    for (std::size_t c = 0; c < spec.n_contexts; ++c) {
      Proto p{kAllScenes[c % kAllScenes.size()], spec.locations[c % spec.locations.size()],
              std::vector<double>(kActivityDim)};
      for (double& v : p.activity) v = rng.normal();
      protos.push_back(std::move(p));
    }
  }

  Manifest manifest;
  manifest.base_dir = out_dir;
  manifest.declared_locations = spec.locations;
  std::map<std::string, SynthClipTruth> truth;
  std::vector<std::string> lines;
  lines.push_back(manifest_header(manifest).dump());

  struct DogDraw {
    SynthClipTruth t;
    std::size_t group;
  };
  std::vector<DogDraw> dogs;
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const SynthGroup& grp = spec.groups[g];
    for (std::size_t i = 0; i < spec.n_clips_per_group; ++i) {
      SynthClipTruth t;
      t.id = "dog_g" + std::to_string(g) + "_" + padded(i);
      t.kind = VocalizerKind::dog_vocal;
      t.lang_env = grp.lang_env;
      Rng rng(mix_seed(spec.seed, "dog-params:" + t.id));
      t.f0_hz = grp.planted_f0_hz * std::exp(spec.f0_jitter_rel * rng.normal());
      t.am_rate_hz = grp.planted_am_rate_hz * std::max(0.2, 1.0 + spec.rate_jitter_rel * rng.normal());
      t.loudness_db = grp.planted_loudness_db + spec.loudness_jitter_db * rng.normal();
      t.n_bursts = spec.n_bursts;
      t.duration_s = static_cast<double>(spec.n_bursts) / t.am_rate_hz;
      t.source_video_id = "vid_" + t.id;
      t.context_prototype = static_cast<int>(i % spec.n_contexts);
      dogs.push_back({std::move(t), g});
    }
  }

  for (const DogDraw& d : dogs) {
    const SynthClipTruth& t = d.t;
    Rng rng(mix_seed(spec.seed, "dog-audio:" + t.id));
    BurstParams bp;
    bp.f0_hz = t.f0_hz;
    bp.am_rate_hz = t.am_rate_hz;
    bp.loudness_db = t.loudness_db;
    bp.n_bursts = t.n_bursts;
    bp.duty = spec.duty;
    bp.ramp_s = spec.ramp_s;
    bp.noise_snr_db = spec.noise_snr_db;
    bp.sample_rate = spec.sample_rate;
    AudioClip clip = synthesize_bursts(bp, rng);
    clip.id = t.id;

    ClipRecord r;
    r.id = t.id;
    r.kind = VocalizerKind::dog_vocal;
    r.lang_env = t.lang_env;
    r.audio_path = out_dir / "audio" / (t.id + ".wav");
    r.start_s = 1.0;
    r.end_s = 1.0 + clip.duration_s();
    r.source_video_id = t.source_video_id;
    const Proto& proto = protos[static_cast<std::size_t>(t.context_prototype)];
    Context ctx{proto.scene, proto.location, proto.activity};
    for (double& v : ctx.activity) v += spec.activity_noise * rng.normal();
    r.context = ctx;
    write_wav(r.audio_path, clip, WavEncoding::float32);
    const fs::path blob = out_dir / "activity" / (t.id + ".f32");
    write_activity_blob(blob, ctx.activity);
    SynthClipTruth tt = t;
    tt.duration_s = clip.duration_s();
    tt.word_boundaries_s = burst_spans(bp);
    if (spec.write_annotations) {
      std::vector<EventSpan> spans;
      for (const auto& [s, e] : tt.word_boundaries_s) spans.push_back(EventSpan{"barking", s, e, 1.0});
      r.annotation_path = out_dir / "annotations" / (t.id + ".json");
      save_annotations(*r.annotation_path, spans);
    }
    lines.push_back(record_to_json(r, out_dir, blob).dump());
    truth[t.id] = std::move(tt);
  }

  if (spec.host.enabled && !dogs.empty()) {
    const HostSpec& hs = spec.host;
    std::vector<double> dog_st, dog_rate;
    for (const DogDraw& d : dogs) {
      dog_st.push_back(semitone(d.t.f0_hz));
      dog_rate.push_back(d.t.am_rate_hz);
    }
    Rng rng(mix_seed(spec.seed, "host-params"));
    auto partner = [&](const std::vector<double>& x) {
      try {
        return planted_partner(x, hs.correlation, rng);
      } catch (const ValidationError&) {
        std::vector<double> y(x.size());
        for (double& v : y) v = rng.normal();
        return y;
      }
    };
    const std::vector<double> zf = partner(dog_st);
    const std::vector<double> zr = partner(dog_rate);
    for (std::size_t i = 0; i < dogs.size(); ++i) {
      const SynthClipTruth& dog = dogs[i].t;
      for (std::size_t k = 0; k < hs.clips_per_video; ++k) {
        SynthClipTruth t;
        t.id = "host_" + dog.id.substr(4) + "_" + std::to_string(k);
        t.kind = VocalizerKind::host_speech;
        t.lang_env = dog.lang_env;
        t.f0_hz = from_semitone(semitone(hs.f0_hz) + hs.f0_spread_st * zf[i]);
        t.am_rate_hz = std::max(0.5, hs.am_rate_hz + hs.am_rate_spread_hz * zr[i]);
        t.loudness_db = hs.loudness_db;
        t.n_bursts = hs.n_bursts;
        t.source_video_id = dog.source_video_id;
        Rng arng(mix_seed(spec.seed, "host-audio:" + t.id));
        BurstParams bp;
        bp.f0_hz = t.f0_hz;
        bp.am_rate_hz = t.am_rate_hz;
        bp.loudness_db = t.loudness_db;
        bp.n_bursts = t.n_bursts;
        bp.duty = spec.duty;
        bp.ramp_s = spec.ramp_s;
        bp.noise_snr_db = spec.noise_snr_db;
        bp.formants = kHostFormants;
        bp.sample_rate = spec.sample_rate;
        AudioClip clip = synthesize_bursts(bp, arng);
        clip.id = t.id;
        ClipRecord r;
        r.id = t.id;
        r.kind = VocalizerKind::host_speech;
        r.lang_env = t.lang_env;
        r.audio_path = out_dir / "audio" / (t.id + ".wav");
        r.start_s = 10.0 + 5.0 * static_cast<double>(k);
        r.end_s = r.start_s + clip.duration_s();
        r.source_video_id = t.source_video_id;
        write_wav(r.audio_path, clip, WavEncoding::float32);
        lines.push_back(record_to_json(r, out_dir).dump());
        t.duration_s = clip.duration_s();
        t.word_boundaries_s = burst_spans(bp);
        truth[t.id] = std::move(t);
      }
    }
  }

  SynthResult res;
  res.manifest_path = out_dir / "manifest.jsonl";
  res.truth_path = out_dir / "truth.json";
  write_file(res.manifest_path, join(lines, "\n") + "\n");
  write_file(res.truth_path, truth_to_json(spec, truth).dump(2) + "\n");
  res.manifest = load_manifest(res.manifest_path);
  res.truth = std::move(truth);
  return res;
}

}  // namespace barkscope
