#include "barkscope/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "barkscope/error.hpp"
#include "barkscope/parallel.hpp"
#include "barkscope/rng.hpp"
#include "barkscope/stats.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

namespace {

void check_dims(const DesignMatrix& background, std::span<const double> x) {
  if (background.n_rows == 0) throw ValidationError("shapley background is empty");
  if (background.n_cols != x.size()) {
    throw ValidationError("row has " + std::to_string(x.size()) + " features, background has " +
                          std::to_string(background.n_cols));
  }
}

std::string_view strip_pair_suffix(std::string_view name) {
  for (std::string_view suffix : {std::string_view("_left"), std::string_view("_right")}) {
    if (name.size() > suffix.size() && name.substr(name.size() - suffix.size()) == suffix) {
      return name.substr(0, name.size() - suffix.size());
    }
  }
  return name;
}

bool contains(std::string_view s, std::string_view part) { return s.find(part) != std::string_view::npos; }

std::vector<double> exhaustive_shapley(const ValueFunction& f, const DesignMatrix& background,
                                       std::span<const double> x) {
  const std::size_t d = x.size();
  if (d > 16) throw ValidationError("exhaustive shapley supports at most 16 features");
  const std::size_t n_sets = std::size_t{1} << d;
  std::vector<double> v(n_sets, 0.0);
  std::vector<double> z(d);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    double acc = 0.0;
    for (std::size_t b = 0; b < background.n_rows; ++b) {
      const auto row = background.row(b);
      for (std::size_t j = 0; j < d; ++j) z[j] = (mask >> j) & 1u ? x[j] : row[j];
      acc += f(z);
    }
    v[mask] = acc / static_cast<double>(background.n_rows);
  }
  // weight(|S|) = |S|! (d - |S| - 1)! / d!
  std::vector<double> weight(d);
  for (std::size_t s = 0; s < d; ++s) {
    weight[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) + std::lgamma(static_cast<double>(d - s)) -
                         std::lgamma(static_cast<double>(d) + 1.0));
  }
  std::vector<double> phi(d, 0.0);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t i = 0; i < d; ++i) {
      if ((mask >> i) & 1u) continue;
      phi[i] += weight[size] * (v[mask | (std::size_t{1} << i)] - v[mask]);
    }
  }
  return phi;
}

}  // namespace

std::string_view to_string(DimType t) {
  switch (t) {
    case DimType::Energy: return "Energy";
    case DimType::Frequency: return "Frequency";
    case DimType::Temporal: return "Temporal";
    case DimType::Spectral: return "Spectral";
  }
  return "Spectral";
}

DimType dim_type(std::string_view feature_name) {
  const std::string_view n = strip_pair_suffix(feature_name);
  static const std::map<std::string, DimType, std::less<>> named{
      {"loudness_sma3_amean", DimType::Energy},
      {"F0semitoneFrom27.5Hz_sma3nz_percentile50.0", DimType::Frequency},
      {"loudness_sma3_meanRisingSlope", DimType::Energy},
      {"logRelF0-H1-A3_sma3nz_stddevNorm", DimType::Frequency},
      {"loudnessPeaksPerSec", DimType::Temporal},
      {"F0semitoneFrom27.5Hz_sma3nz_percentile80.0", DimType::Frequency},
      {"hammarbergIndexV_sma3nz_stddevNorm", DimType::Spectral},
      {"slopeV0-500_sma3nz_amean", DimType::Temporal},
      {"loudness_sma3_percentile80.0", DimType::Energy},
      {"slopeV500-1500_sma3nz_stddevNorm", DimType::Temporal},
  };
  if (auto it = named.find(n); it != named.end()) return it->second;
  if (contains(n, "PerSec") || contains(n, "SegmentLength")) return DimType::Temporal;
  if (n.starts_with("loudness")) return DimType::Energy;
  if (contains(n, "F0") || contains(n, "H1-A3")) return DimType::Frequency;
  return DimType::Spectral;
}

std::vector<double> shapley_values(const ValueFunction& f, const DesignMatrix& background, std::span<const double> x,
                                   std::size_t n_permutations, std::uint64_t seed, bool exhaustive) {
  check_dims(background, x);
  if (exhaustive) return exhaustive_shapley(f, background, x);
  if (n_permutations < 1) throw ValidationError("shapley needs at least one permutation");
  const std::size_t d = x.size();
  Rng rng(mix_seed(seed, "shapley"));
  std::vector<std::size_t> bg(background.n_rows);
  std::iota(bg.begin(), bg.end(), 0);
  rng.shuffle(bg);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(d, 0.0), z(d);
  for (std::size_t k = 0; k < n_permutations; ++k) {
    rng.shuffle(order);
    const auto b = background.row(bg[k % bg.size()]);
    std::copy(b.begin(), b.end(), z.begin());
    double prev = f(z);
    for (std::size_t i : order) {
      z[i] = x[i];
      const double cur = f(z);
      phi[i] += cur - prev;
      prev = cur;
    }
  }
  for (double& p : phi) p /= static_cast<double>(n_permutations);
  return phi;
}

ValueFunction argmax_probability(const TrainedModel& model, std::span<const double> x) {
  const auto cls = static_cast<std::size_t>(model.predict(x));
  return [&model, cls](std::span<const double> row) { return model.predict_proba(row)[cls]; };
}

std::vector<double> shapley_values(const TrainedModel& model, const DesignMatrix& background,
                                   std::span<const double> x, std::size_t n_permutations, std::uint64_t seed,
                                   bool exhaustive) {
  check_dims(background, x);
  if (x.size() != model.n_features()) throw ValidationError("row dimension does not match the model");
  return shapley_values(argmax_probability(model, x), background, x, n_permutations, seed, exhaustive);
}

double efficiency_check(const ValueFunction& f, const DesignMatrix& background, std::span<const double> x,
                        std::span<const double> attributions) {
  check_dims(background, x);
  double base = 0.0;
  for (std::size_t b = 0; b < background.n_rows; ++b) base += f(background.row(b));
  base /= static_cast<double>(background.n_rows);
  const double total = std::accumulate(attributions.begin(), attributions.end(), 0.0);
  return std::abs(total - (f(x) - base));
}

double efficiency_check(const TrainedModel& model, const DesignMatrix& background, std::span<const double> x,
                        std::span<const double> attributions) {
  return efficiency_check(argmax_probability(model, x), background, x, attributions);
}

std::vector<ShapRow> mean_abs_shap(const TrainedModel& model, const DesignMatrix& data, const ShapConfig& config,
                                   std::uint64_t seed) {
  if (data.n_rows == 0) throw ValidationError("no rows to explain");
  if (config.sample_size > data.n_rows) {
    throw ValidationError("sample size " + std::to_string(config.sample_size) + " exceeds " +
                          std::to_string(data.n_rows) + " rows");
  }
  Rng rng(mix_seed(seed, "shap-sample"));
  std::vector<std::size_t> all(data.n_rows);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all);
  std::vector<std::size_t> explained(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(config.sample_size));
  rng.shuffle(all);
  const std::size_t nb = std::clamp<std::size_t>(config.background_size, 1, data.n_rows);
  std::vector<std::size_t> bg_rows(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(nb));
  std::sort(explained.begin(), explained.end());
  std::sort(bg_rows.begin(), bg_rows.end());
  const DesignMatrix background = data.subset(bg_rows);

  const std::size_t d = data.n_cols;
  std::vector<std::vector<double>> per_row(explained.size());
  parallel_for(explained.size(), config.jobs, [&](std::size_t k) {
    per_row[k] = shapley_values(model, background, data.row(explained[k]), config.n_permutations,
                                mix_seed(seed, explained[k]));
  });
  std::vector<double> acc(d, 0.0);
  for (const auto& phi : per_row) {
    for (std::size_t j = 0; j < d; ++j) acc[j] += std::abs(phi[j]);
  }
  std::vector<ShapRow> rows(d);
  for (std::size_t j = 0; j < d; ++j) {
    rows[j].feature_name = j < data.column_names.size() ? data.column_names[j] : "x" + std::to_string(j);
    rows[j].mean_abs_shap = explained.empty() ? 0.0 : acc[j] / static_cast<double>(explained.size());
    rows[j].dim_type = dim_type(rows[j].feature_name);
    rows[j].prominent = rows[j].mean_abs_shap > config.prominence_cutoff;
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ShapRow& a, const ShapRow& b) { return a.mean_abs_shap > b.mean_abs_shap; });
  return rows;
}

std::vector<PearsonRow> correlate_pairs(const CorrelationInput& input, const std::vector<std::string>& feature_names,
                                        std::uint64_t seed) {
  if (!input.records || !input.dog_features || !input.host_features) {
    throw ValidationError("correlate_pairs needs records and both feature stores");
  }
  // Per video, host rows in record order.
  std::map<std::string, std::vector<const FeatureVector*>> host_by_video;
  std::vector<const ClipRecord*> dogs;
  for (const ClipRecord& r : *input.records) {
    if (r.kind == VocalizerKind::host_speech) {
      if (const FeatureVector* fv = input.host_features->find(r.id)) host_by_video[r.source_video_id].push_back(fv);
    } else if (input.dog_features->find(r.id)) {
      dogs.push_back(&r);
    }
  }
  std::vector<const FeatureVector*> dog_rows;
  std::vector<std::string> videos;
  std::set<std::string> unmatched;
  for (const ClipRecord* r : dogs) {
    if (host_by_video.count(r->source_video_id)) {
      dog_rows.push_back(&input.dog_features->get(r->id));
      videos.push_back(r->source_video_id);
    } else {
      unmatched.insert(r->source_video_id.empty() ? "<none>" : r->source_video_id);
    }
  }
  if (dog_rows.empty()) {
    std::vector<std::string> names(unmatched.begin(), unmatched.end());
    throw ValidationError("no dog clip has host speech from the same video; unmatched videos: " + join(names, ", "));
  }
  const std::size_t n = dog_rows.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, "random-speech"));
  rng.shuffle(perm);

  std::vector<PearsonRow> out;
  for (const std::string& name : feature_names) {
    std::vector<double> dog(n), host(n), random(n);
    for (std::size_t i = 0; i < n; ++i) {
      dog[i] = dog_rows[i]->at(name);
      double acc = 0.0;
      const auto& hs = host_by_video.at(videos[i]);
      for (const FeatureVector* h : hs) acc += h->at(name);
      host[i] = acc / static_cast<double>(hs.size());
    }
    for (std::size_t i = 0; i < n; ++i) random[i] = host[perm[i]];
    PearsonRow row;
    row.feature_name = name;
    try {
      const PearsonResult h = pearson(dog, host);
      const PearsonResult r = pearson(dog, random);
      row.r_host = h.r;
      row.p_host = h.p;
      row.r_random = r.r;
      row.p_random = r.p;
      row.significant = h.p < 0.05;
    } catch (const ValidationError&) {
      row.defined = false;
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string attribution_csv(const std::vector<ShapRow>& rows) {
  std::ostringstream out;
  out << "feature_name,dim_type,mean_abs_shap,prominent\n";
  for (const ShapRow& r : rows) {
    out << r.feature_name << ',' << to_string(r.dim_type) << ',' << format_fixed(r.mean_abs_shap, 6) << ','
        << (r.prominent ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string correlation_csv(const std::vector<PearsonRow>& rows) {
  std::ostringstream out;
  out << "feature_name,r_host,p_host,r_random,p_random,significant\n";
  for (const PearsonRow& r : rows) {
    out << r.feature_name << ',';
    if (r.defined) {
      out << format_fixed(r.r_host, 4) << ',' << format_sci(r.p_host, 2) << ',' << format_fixed(r.r_random, 4) << ','
          << format_sci(r.p_random, 2) << ',' << (r.significant ? "true" : "false");
    } else {
      out << "NA,NA,NA,NA,false";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace barkscope
