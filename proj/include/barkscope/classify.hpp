#ifndef BARKSCOPE_CLASSIFY_HPP
#define BARKSCOPE_CLASSIFY_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "barkscope/matrix.hpp"

namespace barkscope {

enum class ModelFamily { gradient_boosted_trees, k_nearest_neighbors, logistic_regression, random_forest };
inline constexpr std::array kAllFamilies{ModelFamily::gradient_boosted_trees, ModelFamily::k_nearest_neighbors,
                                         ModelFamily::logistic_regression, ModelFamily::random_forest};

// Long name ("gradient_boosted_trees") and short tag ("gbt").
std::string_view to_string(ModelFamily f);
std::string_view short_name(ModelFamily f);
ModelFamily family_from_string(std::string_view s);  // accepts either form

struct Hyperparameters {
  int gbt_rounds = 200;
  int gbt_max_depth = 4;
  double gbt_learning_rate = 0.1;
  double gbt_subsample = 1.0;
  double gbt_lambda = 1.0;
  double gbt_min_child_weight = 1e-3;

  int knn_k = 5;

  double lr_l2 = 1e-3;
  double lr_tolerance = 1e-7;
  int lr_max_iter = 5000;

  int rf_trees = 200;
  int rf_max_features = 0;  // 0: floor(sqrt(d))
  bool rf_bootstrap = true;
  int rf_min_leaf = 1;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

void to_json(nlohmann::json& j, const Hyperparameters& h);
void from_json(const nlohmann::json& j, Hyperparameters& h);

// x[feature] <= threshold goes left. Leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // GBT: leaf score; RF: leaf class index

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double evaluate(std::span<const double> x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const DesignMatrix& m);
  std::vector<double> apply(std::span<const double> x) const;
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct GbtState {
  // trees[round * n_classes + class]
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  std::vector<double> train_loss;  // softmax cross-entropy after each round
  friend bool operator==(const GbtState&, const GbtState&) = default;
};

struct KnnState {
  Standardizer scaler;
  std::vector<double> rows;  // standardized training rows
  std::vector<int> labels;
  int k = 5;
  friend bool operator==(const KnnState&, const KnnState&) = default;
};

struct LrState {
  Standardizer scaler;
  // weights[c * (d + 1) + j], j == d is the bias
  std::vector<double> weights;
  int iterations = 0;
  double gradient_norm = 0.0;  // max-abs gradient at exit
  friend bool operator==(const LrState&, const LrState&) = default;
};

struct RfState {
  std::vector<Tree> trees;
  friend bool operator==(const RfState&, const RfState&) = default;
};

class TrainedModel {
 public:
  using State = std::variant<GbtState, KnnState, LrState, RfState>;

  TrainedModel(ModelFamily family, Hyperparameters hyper, std::uint64_t seed, std::size_t n_features,
               int n_classes, State state);

  ModelFamily family() const { return family_; }
  const Hyperparameters& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }
  const State& state() const { return state_; }

  // Class probabilities; sum to 1. Throws on dimension mismatch.
  std::vector<double> predict_proba(std::span<const double> row) const;
  // Argmax, ties to the lowest class index.
  int predict(std::span<const double> row) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedModel load(const std::filesystem::path& path);

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;

 private:
  ModelFamily family_;
  Hyperparameters hyper_;
  std::uint64_t seed_;
  std::size_t n_features_;
  int n_classes_;
  State state_;
};

// n_classes == 0 infers max(label) + 1.
TrainedModel train(ModelFamily family, const DesignMatrix& data, const Hyperparameters& hyper,
                   std::uint64_t seed, int n_classes = 0);

int argmax(std::span<const double> p);
std::vector<double> softmax(std::span<const double> scores);

// Mean softmax cross-entropy plus (l2/2)||W||^2 over non-bias weights, on
// already-standardized rows. Fills `grad` (same layout as weights) if given.
double logistic_objective(const DesignMatrix& standardized, int n_classes, std::span<const double> weights,
                          double l2, std::vector<double>* grad);

enum class FoldMode { stratified, group_by_clip };
std::string_view to_string(FoldMode m);

struct FoldAssignment {
  std::vector<std::vector<std::size_t>> folds;  // test indices per fold
  FoldMode mode = FoldMode::stratified;
  bool stratified = true;  // false when the unstratified fallback was used
};

FoldAssignment assign_folds(const DesignMatrix& data, int n_folds, std::uint64_t seed,
                            FoldMode mode = FoldMode::stratified, int n_classes = 0);

struct CVReport {
  std::string feature_set;
  ModelFamily family = ModelFamily::gradient_boosted_trees;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  FoldMode fold_mode = FoldMode::stratified;
  bool stratified = true;

  nlohmann::json to_json() const;
};

CVReport cross_validate(const DesignMatrix& data, ModelFamily family, const Hyperparameters& hyper,
                        int n_folds, std::uint64_t seed, FoldMode mode = FoldMode::stratified,
                        int n_classes = 0);

struct GridCell {
  std::string feature_set;
  ModelFamily family = ModelFamily::gradient_boosted_trees;
  std::optional<CVReport> report;
  std::string error;  // set when the cell failed
};

struct NamedMatrix {
  std::string feature_set;
  DesignMatrix data;
};

// Every (feature set, family) cell; a failing cell is marked, never fatal.
std::vector<GridCell> accuracy_grid(const std::vector<NamedMatrix>& sets, const std::vector<ModelFamily>& families,
                                    const Hyperparameters& hyper, int n_folds, std::uint64_t seed,
                                    FoldMode mode = FoldMode::stratified, int n_classes = 0);

// Rows = feature sets, columns = families, mean accuracy to 4 decimals.
std::string grid_csv(const std::vector<GridCell>& grid, const std::vector<ModelFamily>& families);

}  // namespace barkscope

#endif  // BARKSCOPE_CLASSIFY_HPP
