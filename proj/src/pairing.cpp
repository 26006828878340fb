#include "barkscope/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "barkscope/error.hpp"
#include "barkscope/rng.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

std::string_view to_string(Scene s) {
  switch (s) {
    case Scene::Alone: return "Alone";
    case Scene::Bath: return "Bath";
    case Scene::Eat: return "Eat";
    case Scene::Fight: return "Fight";
    case Scene::Play: return "Play";
    case Scene::Run: return "Run";
    case Scene::Stranger: return "Stranger";
    case Scene::Walk: return "Walk";
  }
  return "?";
}

std::optional<Scene> scene_from_string(std::string_view s) {
  for (Scene sc : kAllScenes) {
    if (to_string(sc) == s) return sc;
  }
  return std::nullopt;
}

std::string_view to_string(VocalizerKind k) {
  return k == VocalizerKind::dog_vocal ? "dog_vocal" : "host_speech";
}

std::string_view to_string(LangEnv l) { return l == LangEnv::En ? "En" : "Ja"; }

std::string_view to_string(PairClass c) {
  switch (c) {
    case PairClass::EnEn: return "EnEn";
    case PairClass::JaJa: return "JaJa";
    case PairClass::EnJa: return "EnJa";
    case PairClass::JaEn: return "JaEn";
  }
  return "?";
}

PairClass pair_class(LangEnv left, LangEnv right) {
  if (left == LangEnv::En) return right == LangEnv::En ? PairClass::EnEn : PairClass::EnJa;
  return right == LangEnv::Ja ? PairClass::JaJa : PairClass::JaEn;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("activity vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) throw ValidationError("zero-norm activity vector: cosine undefined");
  return dot / std::sqrt(na * nb);
}

bool context_match(const Context& a, const Context& b, double cos_threshold) {
  if (a.scene != b.scene || a.location != b.location) {
    // Still reject degenerate vectors so the error does not depend on the
    // other fields.
    cosine_similarity(a.activity, b.activity);
    return false;
  }
  return cosine_similarity(a.activity, b.activity) >= cos_threshold;
}

PairingResult build_pairs(const std::vector<ClipRecord>& records, std::size_t per_class_quota,
                          std::uint64_t seed, double cos_threshold) {
  std::vector<const ClipRecord*> dogs;
  for (const auto& r : records) {
    if (r.kind != VocalizerKind::dog_vocal) continue;
    if (!r.context) throw ValidationError("dog clip " + r.id + " has no context");
    dogs.push_back(&r);
  }
  std::sort(dogs.begin(), dogs.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  // Only clips sharing (scene, location) can match.
  std::map<std::pair<Scene, std::string>, std::vector<const ClipRecord*>> groups;
  for (const auto* d : dogs) groups[{d->context->scene, d->context->location}].push_back(d);

  std::array<std::vector<ClipPair>, kNumPairClasses> by_class;
  for (const auto& [key, members] : groups) {
    std::vector<double> norm2(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& v = members[i]->context->activity;
      double s = 0.0;
      for (double x : v) s += x * x;
      if (s <= 0.0) throw ValidationError("zero-norm activity vector for clip " + members[i]->id);
      norm2[i] = s;
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        const auto& a = members[i]->context->activity;
        const auto& b = members[j]->context->activity;
        if (a.size() != b.size()) throw ValidationError("activity vectors differ in length");
        double dot = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
        if (dot / std::sqrt(norm2[i] * norm2[j]) < cos_threshold) continue;
        const auto* l = members[i];
        const auto* r = members[j];
        by_class[static_cast<int>(pair_class(l->lang_env, r->lang_env))].push_back(
            {l->id, r->id, pair_class(l->lang_env, r->lang_env)});
        by_class[static_cast<int>(pair_class(r->lang_env, l->lang_env))].push_back(
            {r->id, l->id, pair_class(r->lang_env, l->lang_env)});
      }
    }
  }

  PairingResult out;
  for (std::size_t c = 0; c < kNumPairClasses; ++c) {
    auto& cls = by_class[c];
    std::sort(cls.begin(), cls.end(),
              [](const ClipPair& a, const ClipPair& b) { return std::tie(a.left, a.right) < std::tie(b.left, b.right); });
    out.available[c] = cls.size();
    if (cls.size() > per_class_quota) {
      Rng rng(mix_seed(seed, c));
      // Partial Fisher-Yates: the first `quota` slots become the sample.
      for (std::size_t i = 0; i < per_class_quota; ++i) {
        std::swap(cls[i], cls[i + rng.below(cls.size() - i)]);
      }
      cls.resize(per_class_quota);
    }
    out.sampled[c] = cls.size();
    out.pairs.insert(out.pairs.end(), cls.begin(), cls.end());
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const ClipPair& a, const ClipPair& b) { return std::tie(a.left, a.right) < std::tie(b.left, b.right); });
  return out;
}

DesignMatrix pair_dataset(std::vector<ClipPair> pairs, const FeatureStore& features) {
  std::sort(pairs.begin(), pairs.end(),
            [](const ClipPair& a, const ClipPair& b) { return std::tie(a.left, a.right) < std::tie(b.left, b.right); });
  DesignMatrix m;
  const auto& names = feature_names(features.set_id());
  for (const auto& n : names) m.column_names.push_back(n + "_left");
  for (const auto& n : names) m.column_names.push_back(n + "_right");
  m.n_cols = m.column_names.size();
  for (const auto& p : pairs) {
    const FeatureVector row = compare_feature_set(features.get(p.left), features.get(p.right));
    m.add_row(row.values, static_cast<int>(p.label), p.left + "|" + p.right, {p.left, p.right});
  }
  return m;
}

void save_pairs(const std::filesystem::path& csv, const std::vector<ClipPair>& pairs) {
  std::string out = "left,right,label\n";
  for (const auto& p : pairs) out += p.left + "," + p.right + "," + std::string(to_string(p.label)) + "\n";
  write_file(csv, out);
}

std::vector<ClipPair> load_pairs(const std::filesystem::path& csv) {
  const auto lines = split(read_file(csv), '\n');
  if (lines.empty() || lines[0] != "left,right,label") throw ValidationError("bad pairs header in " + csv.string());
  std::vector<ClipPair> pairs;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cells = split(lines[i], ',');
    if (cells.size() != 3) throw ValidationError(csv.string() + ":" + std::to_string(i + 1) + ": expected 3 columns");
    ClipPair p{cells[0], cells[1], PairClass::EnEn};
    bool found = false;
    for (auto c : kAllPairClasses) {
      if (to_string(c) == cells[2]) {
        p.label = c;
        found = true;
      }
    }
    if (!found) throw ValidationError(csv.string() + ":" + std::to_string(i + 1) + ": unknown label " + cells[2]);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace barkscope
