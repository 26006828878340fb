#ifndef BARKSCOPE_EXPLAIN_HPP
#define BARKSCOPE_EXPLAIN_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "barkscope/classify.hpp"
#include "barkscope/features.hpp"
#include "barkscope/matrix.hpp"
#include "barkscope/pairing.hpp"

namespace barkscope {

enum class DimType { Energy, Frequency, Temporal, Spectral };
std::string_view to_string(DimType t);

// Fixed name -> type map; pair suffixes (_left/_right) are ignored.
DimType dim_type(std::string_view feature_name);

inline constexpr double kDefaultProminenceCutoff = 0.04;

using ValueFunction = std::function<double(std::span<const double>)>;

// Interventional Shapley values of f at x against the background rows.
// Sampling mode: n_permutations random orderings; permutation k pairs with
// background row k mod |background| (after a seeded shuffle). Exhaustive mode
// enumerates all 2^d coalitions over the full background (d <= 16).
std::vector<double> shapley_values(const ValueFunction& f, const DesignMatrix& background, std::span<const double> x,
                                   std::size_t n_permutations, std::uint64_t seed, bool exhaustive = false);

// f = predicted probability of the model's argmax class at x.
std::vector<double> shapley_values(const TrainedModel& model, const DesignMatrix& background,
                                   std::span<const double> x, std::size_t n_permutations, std::uint64_t seed,
                                   bool exhaustive = false);

ValueFunction argmax_probability(const TrainedModel& model, std::span<const double> x);

// |sum(phi) - (f(x) - mean f(background))|
double efficiency_check(const ValueFunction& f, const DesignMatrix& background, std::span<const double> x,
                        std::span<const double> attributions);
double efficiency_check(const TrainedModel& model, const DesignMatrix& background, std::span<const double> x,
                        std::span<const double> attributions);

struct ShapRow {
  std::string feature_name;
  double mean_abs_shap = 0.0;
  DimType dim_type = DimType::Spectral;
  bool prominent = false;
};

struct ShapConfig {
  std::size_t sample_size = 100;       // explained rows
  std::size_t background_size = 100;   // rows drawn for the background
  std::size_t n_permutations = 100;
  double prominence_cutoff = kDefaultProminenceCutoff;
  unsigned jobs = 1;
};

// Mean |phi| over sampled rows, sorted descending (ties by column order).
std::vector<ShapRow> mean_abs_shap(const TrainedModel& model, const DesignMatrix& data, const ShapConfig& config,
                                   std::uint64_t seed);

struct PearsonRow {
  std::string feature_name;
  double r_host = 0.0;
  double p_host = 1.0;
  double r_random = 0.0;
  double p_random = 1.0;
  bool significant = false;
  bool defined = true;  // false when a column had zero variance
};

struct CorrelationInput {
  const std::vector<ClipRecord>* records = nullptr;
  const FeatureStore* dog_features = nullptr;
  const FeatureStore* host_features = nullptr;
};

// Dog clip feature vs the mean host-speech feature of its source video; the
// random baseline permutes the host rows with the seeded generator.
std::vector<PearsonRow> correlate_pairs(const CorrelationInput& input, const std::vector<std::string>& feature_names,
                                        std::uint64_t seed);

std::string attribution_csv(const std::vector<ShapRow>& rows);
std::string correlation_csv(const std::vector<PearsonRow>& rows);

}  // namespace barkscope

#endif  // BARKSCOPE_EXPLAIN_HPP
