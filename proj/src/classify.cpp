#include "barkscope/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "barkscope/error.hpp"
#include "barkscope/rng.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

namespace {

using json = nlohmann::json;

constexpr double kMinGain = 1e-12;

int infer_classes(const DesignMatrix& data, int n_classes) {
  int max_label = -1;
  for (int y : data.labels) {
    if (y < 0) throw ValidationError("negative class label " + std::to_string(y));
    max_label = std::max(max_label, y);
  }
  if (n_classes <= 0) return max_label + 1;
  if (max_label >= n_classes) {
    throw ValidationError("label " + std::to_string(max_label) + " out of range for " + std::to_string(n_classes) +
                          " classes");
  }
  return n_classes;
}

std::size_t distinct_labels(const DesignMatrix& data) {
  std::vector<int> l = data.labels;
  std::sort(l.begin(), l.end());
  return static_cast<std::size_t>(std::unique(l.begin(), l.end()) - l.begin());
}

double midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) / 2.0;
  return m < hi ? m : lo;
}

// ---- gradient boosting ------------------------------------------------------

struct Presorted {
  std::vector<std::vector<std::uint32_t>> order;  // per feature, rows by ascending value
};

Presorted presort(const DesignMatrix& x) {
  Presorted p;
  p.order.resize(x.n_cols);
  for (std::size_t f = 0; f < x.n_cols; ++f) {
    auto& o = p.order[f];
    o.resize(x.n_rows);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x.at(a, f) < x.at(b, f); });
  }
  return p;
}

// Level-wise Newton tree on (g, h). Rows with in_sample == 0 are ignored.
Tree grow_boosted_tree(const DesignMatrix& x, const Presorted& sorted, const std::vector<double>& g,
                       const std::vector<double>& h, const std::vector<char>& in_sample, const Hyperparameters& hp) {
  struct Frontier {
    int node;
    double G = 0.0, H = 0.0;
    double best_gain = kMinGain;
    int best_feature = -1;
    double best_threshold = 0.0;
  };
  struct ScanState {
    double GL = 0.0, HL = 0.0, last = 0.0;
    bool any = false;
  };

  Tree tree;
  tree.nodes.emplace_back();
  std::vector<int> slot(x.n_rows, -1);
  std::vector<Frontier> frontier(1);
  frontier[0].node = 0;
  for (std::size_t r = 0; r < x.n_rows; ++r) {
    if (!in_sample[r]) continue;
    slot[r] = 0;
    frontier[0].G += g[r];
    frontier[0].H += h[r];
  }

  const double lambda = hp.gbt_lambda;
  const double mcw = hp.gbt_min_child_weight;
  auto leaf_value = [&](double G, double H) { return -G / (H + lambda); };

  for (int depth = 0; depth < hp.gbt_max_depth && !frontier.empty(); ++depth) {
    std::vector<ScanState> scan(frontier.size());
    for (std::size_t f = 0; f < x.n_cols; ++f) {
      std::fill(scan.begin(), scan.end(), ScanState{});
      for (std::uint32_t r : sorted.order[f]) {
        const int k = slot[r];
        if (k < 0) continue;
        ScanState& s = scan[static_cast<std::size_t>(k)];
        Frontier& fr = frontier[static_cast<std::size_t>(k)];
        const double v = x.at(r, f);
        if (s.any && v > s.last) {
          const double GR = fr.G - s.GL;
          const double HR = fr.H - s.HL;
          if (s.HL >= mcw && HR >= mcw) {
            const double gain = s.GL * s.GL / (s.HL + lambda) + GR * GR / (HR + lambda) - fr.G * fr.G / (fr.H + lambda);
            if (gain > fr.best_gain) {
              fr.best_gain = gain;
              fr.best_feature = static_cast<int>(f);
              fr.best_threshold = midpoint(s.last, v);
            }
          }
        }
        s.GL += g[r];
        s.HL += h[r];
        s.last = v;
        s.any = true;
      }
    }

    std::vector<Frontier> next;
    std::vector<int> left_slot(frontier.size(), -1), right_slot(frontier.size(), -1);
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      Frontier& fr = frontier[k];
      TreeNode& node = tree.nodes[static_cast<std::size_t>(fr.node)];
      if (fr.best_feature < 0) {
        node.value = leaf_value(fr.G, fr.H);
        continue;
      }
      node.feature = fr.best_feature;
      node.threshold = fr.best_threshold;
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      const int left = node.left;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      left_slot[k] = static_cast<int>(next.size());
      next.push_back(Frontier{left});
      right_slot[k] = static_cast<int>(next.size());
      next.push_back(Frontier{left + 1});
    }
    for (std::size_t r = 0; r < x.n_rows; ++r) {
      const int k = slot[r];
      if (k < 0) continue;
      const auto ku = static_cast<std::size_t>(k);
      if (left_slot[ku] < 0) {
        slot[r] = -1;
        continue;
      }
      const Frontier& fr = frontier[ku];
      const int s = x.at(r, static_cast<std::size_t>(fr.best_feature)) <= fr.best_threshold ? left_slot[ku] : right_slot[ku];
      slot[r] = s;
      next[static_cast<std::size_t>(s)].G += g[r];
      next[static_cast<std::size_t>(s)].H += h[r];
    }
    frontier = std::move(next);
  }
  for (const Frontier& fr : frontier) tree.nodes[static_cast<std::size_t>(fr.node)].value = leaf_value(fr.G, fr.H);
  return tree;
}

double softmax_loss(const std::vector<double>& scores, const std::vector<int>& labels, int K) {
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* z = scores.data() + i * static_cast<std::size_t>(K);
    const double m = *std::max_element(z, z + K);
    double s = 0.0;
    for (int c = 0; c < K; ++c) s += std::exp(z[c] - m);
    loss += m + std::log(s) - z[labels[i]];
  }
  return labels.empty() ? 0.0 : loss / static_cast<double>(labels.size());
}

GbtState train_gbt(const DesignMatrix& x, const Hyperparameters& hp, std::uint64_t seed, int K) {
  if (hp.gbt_rounds < 0 || hp.gbt_max_depth < 0) throw ValidationError("gbt rounds and depth must be non-negative");
  if (!(hp.gbt_learning_rate > 0.0)) throw ValidationError("gbt learning rate must be positive");
  if (!(hp.gbt_subsample > 0.0 && hp.gbt_subsample <= 1.0)) throw ValidationError("gbt subsample must be in (0, 1]");
  const std::size_t n = x.n_rows;
  const auto Ku = static_cast<std::size_t>(K);
  const Presorted sorted = presort(x);
  GbtState st;
  st.learning_rate = hp.gbt_learning_rate;
  std::vector<double> scores(n * Ku, 0.0);
  std::vector<double> g(n), h(n), p(n * Ku);
  std::vector<char> in_sample(n, 1);
  Rng rng(mix_seed(seed, "gbt"));
  for (int round = 0; round < hp.gbt_rounds; ++round) {
    if (hp.gbt_subsample < 1.0) {
      for (std::size_t i = 0; i < n; ++i) in_sample[i] = rng.uniform() < hp.gbt_subsample ? 1 : 0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto probs = softmax(std::span<const double>(scores.data() + i * Ku, Ku));
      std::copy(probs.begin(), probs.end(), p.begin() + static_cast<std::ptrdiff_t>(i * Ku));
    }
    for (int c = 0; c < K; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double pc = p[i * Ku + static_cast<std::size_t>(c)];
        g[i] = pc - (x.labels[i] == c ? 1.0 : 0.0);
        h[i] = std::max(pc * (1.0 - pc), 1e-16);
      }
      Tree t = grow_boosted_tree(x, sorted, g, h, in_sample, hp);
      for (std::size_t i = 0; i < n; ++i) scores[i * Ku + static_cast<std::size_t>(c)] += st.learning_rate * t.evaluate(x.row(i));
      st.trees.push_back(std::move(t));
    }
    st.train_loss.push_back(softmax_loss(scores, x.labels, K));
  }
  return st;
}

// ---- random forest ----------------------------------------------------------

struct ForestBuilder {
  const DesignMatrix& x;
  const Hyperparameters& hp;
  int K;
  std::size_t mtry;
  Rng& rng;
  Tree tree;

  int majority(const std::vector<std::uint32_t>& rows) const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (auto r : rows) ++counts[static_cast<std::size_t>(x.labels[r])];
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  int grow(std::vector<std::uint32_t> rows) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto min_leaf = static_cast<std::size_t>(std::max(1, hp.rf_min_leaf));
    bool pure = true;
    for (auto r : rows) pure = pure && x.labels[r] == x.labels[rows.front()];
    if (pure || rows.size() < 2 * min_leaf) {
      tree.nodes[static_cast<std::size_t>(id)].value = majority(rows);
      return id;
    }

    std::vector<std::size_t> features(x.n_cols);
    std::iota(features.begin(), features.end(), 0);
    rng.shuffle(features);

    const auto Ku = static_cast<std::size_t>(K);
    std::vector<std::size_t> total(Ku, 0);
    for (auto r : rows) ++total[static_cast<std::size_t>(x.labels[r])];

    double best_score = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::size_t informative = 0;
    std::vector<std::uint32_t> order = rows;
    std::vector<std::size_t> left(Ku);
    for (std::size_t f : features) {
      if (informative >= mtry) break;
      std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double va = x.at(a, f), vb = x.at(b, f);
        return va < vb || (va == vb && a < b);
      });
      if (x.at(order.front(), f) == x.at(order.back(), f)) continue;
      ++informative;
      std::fill(left.begin(), left.end(), 0);
      const std::size_t m = order.size();
      for (std::size_t i = 0; i + 1 < m; ++i) {
        ++left[static_cast<std::size_t>(x.labels[order[i]])];
        const double v = x.at(order[i], f), vn = x.at(order[i + 1], f);
        const std::size_t nl = i + 1, nr = m - nl;
        if (!(vn > v) || nl < min_leaf || nr < min_leaf) continue;
        // Maximizing sum c_l^2/n_l + sum c_r^2/n_r minimizes weighted gini.
        double sl = 0.0, sr = 0.0;
        for (std::size_t c = 0; c < Ku; ++c) {
          const double cl = static_cast<double>(left[c]);
          const double cr = static_cast<double>(total[c] - left[c]);
          sl += cl * cl;
          sr += cr * cr;
        }
        const double score = sl / static_cast<double>(nl) + sr / static_cast<double>(nr);
        if (score > best_score + kMinGain) {
          best_score = score;
          best_feature = static_cast<int>(f);
          best_threshold = midpoint(v, vn);
        }
      }
    }
    if (best_feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = majority(rows);
      return id;
    }
    std::vector<std::uint32_t> lrows, rrows;
    for (auto r : rows) {
      (x.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? lrows : rrows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(lrows));
    const int r = grow(std::move(rrows));
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

RfState train_rf(const DesignMatrix& x, const Hyperparameters& hp, std::uint64_t seed, int K) {
  if (hp.rf_trees < 1) throw ValidationError("random forest needs at least one tree");
  std::size_t mtry = hp.rf_max_features > 0
                         ? static_cast<std::size_t>(hp.rf_max_features)
                         : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.n_cols))));
  mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(1, x.n_cols));
  RfState st;
  for (int t = 0; t < hp.rf_trees; ++t) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> rows(x.n_rows);
    if (hp.rf_bootstrap) {
      for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(x.n_rows));
    } else {
      std::iota(rows.begin(), rows.end(), 0u);
    }
    ForestBuilder b{x, hp, K, mtry, rng, {}};
    b.grow(std::move(rows));
    st.trees.push_back(std::move(b.tree));
  }
  return st;
}

// ---- KNN / LR ---------------------------------------------------------------

DesignMatrix standardized(const DesignMatrix& x, const Standardizer& s) {
  DesignMatrix out = x;
  for (std::size_t r = 0; r < x.n_rows; ++r) {
    for (std::size_t c = 0; c < x.n_cols; ++c) {
      out.values[r * x.n_cols + c] = (x.at(r, c) - s.mean[c]) / s.scale[c];
    }
  }
  return out;
}

KnnState train_knn(const DesignMatrix& x, const Hyperparameters& hp) {
  if (hp.knn_k < 1) throw ValidationError("knn k must be at least 1");
  if (static_cast<std::size_t>(hp.knn_k) > x.n_rows) {
    throw ValidationError("knn k = " + std::to_string(hp.knn_k) + " exceeds " + std::to_string(x.n_rows) +
                          " training rows");
  }
  KnnState st;
  st.scaler = Standardizer::fit(x);
  st.rows = standardized(x, st.scaler).values;
  st.labels = x.labels;
  st.k = hp.knn_k;
  return st;
}

LrState train_lr(const DesignMatrix& x, const Hyperparameters& hp, int K) {
  if (hp.lr_l2 < 0.0) throw ValidationError("lr l2 penalty must be non-negative");
  LrState st;
  st.scaler = Standardizer::fit(x);
  const DesignMatrix z = standardized(x, st.scaler);
  const std::size_t P = static_cast<std::size_t>(K) * (x.n_cols + 1);

  auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  auto sq_norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return s;
  };

  // Accelerated gradient descent with Armijo backtracking and adaptive restart.
  std::vector<double> w(P, 0.0), y = w, gy(P), wn(P), gn(P);
  double fw = logistic_objective(z, K, w, hp.lr_l2, &gy);
  double fy = fw;
  double L = 1.0;
  double t = 1.0;
  st.gradient_norm = max_abs(gy);
  int it = 0;
  if (st.gradient_norm >= hp.lr_tolerance) {
    for (; it < hp.lr_max_iter; ++it) {
      const double gnorm2 = sq_norm(gy);
      double fn = 0.0;
      bool stalled = false;
      while (true) {
        for (std::size_t j = 0; j < P; ++j) wn[j] = y[j] - gy[j] / L;
        fn = logistic_objective(z, K, wn, hp.lr_l2, &gn);
        if (fn <= fy - 0.5 / L * gnorm2 + 1e-15 * std::abs(fy)) break;
        L *= 2.0;
        if (L > 1e20) {
          stalled = true;
          break;
        }
      }
      if (stalled) break;
      st.gradient_norm = max_abs(gn);
      if (st.gradient_norm < hp.lr_tolerance) {
        w = wn;
        ++it;
        break;
      }
      const double tn = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      if (fn > fw) {
        t = 1.0;
        y = wn;
        fy = fn;
        gy = gn;
      } else {
        const double beta = (t - 1.0) / tn;
        for (std::size_t j = 0; j < P; ++j) y[j] = wn[j] + beta * (wn[j] - w[j]);
        t = tn;
        fy = logistic_objective(z, K, y, hp.lr_l2, &gy);
      }
      w = wn;
      fw = fn;
      L *= 0.9;
    }
  }
  st.weights = std::move(w);
  st.iterations = it;
  return st;
}

// ---- JSON helpers -----------------------------------------------------------

json tree_to_json(const Tree& t) {
  json nodes = json::array();
  for (const TreeNode& n : t.nodes) nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value}));
  return nodes;
}

Tree tree_from_json(const json& j) {
  Tree t;
  for (const json& n : j) {
    t.nodes.push_back(TreeNode{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                               n.at(4).get<double>()});
  }
  return t;
}

json scaler_to_json(const Standardizer& s) { return json{{"mean", s.mean}, {"scale", s.scale}}; }

Standardizer scaler_from_json(const json& j) {
  return Standardizer{j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}

constexpr int kModelFormatVersion = 1;

}  // namespace

std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::gradient_boosted_trees: return "gradient_boosted_trees";
    case ModelFamily::k_nearest_neighbors: return "k_nearest_neighbors";
    case ModelFamily::logistic_regression: return "logistic_regression";
    case ModelFamily::random_forest: return "random_forest";
  }
  return "unknown";
}

std::string_view short_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::gradient_boosted_trees: return "gbt";
    case ModelFamily::k_nearest_neighbors: return "knn";
    case ModelFamily::logistic_regression: return "lr";
    case ModelFamily::random_forest: return "rf";
  }
  return "unknown";
}

ModelFamily family_from_string(std::string_view s) {
  for (ModelFamily f : kAllFamilies) {
    if (s == to_string(f) || s == short_name(f)) return f;
  }
  if (s == "xgboost") return ModelFamily::gradient_boosted_trees;
  throw ValidationError("unknown model family '" + std::string(s) + "'");
}

std::string_view to_string(FoldMode m) { return m == FoldMode::stratified ? "stratified" : "group_by_clip"; }

void to_json(nlohmann::json& j, const Hyperparameters& h) {
  j = json{{"gbt_rounds", h.gbt_rounds},
           {"gbt_max_depth", h.gbt_max_depth},
           {"gbt_learning_rate", h.gbt_learning_rate},
           {"gbt_subsample", h.gbt_subsample},
           {"gbt_lambda", h.gbt_lambda},
           {"gbt_min_child_weight", h.gbt_min_child_weight},
           {"knn_k", h.knn_k},
           {"lr_l2", h.lr_l2},
           {"lr_tolerance", h.lr_tolerance},
           {"lr_max_iter", h.lr_max_iter},
           {"rf_trees", h.rf_trees},
           {"rf_max_features", h.rf_max_features},
           {"rf_bootstrap", h.rf_bootstrap},
           {"rf_min_leaf", h.rf_min_leaf}};
}

void from_json(const nlohmann::json& j, Hyperparameters& h) {
  Hyperparameters d;
  h.gbt_rounds = j.value("gbt_rounds", d.gbt_rounds);
  h.gbt_max_depth = j.value("gbt_max_depth", d.gbt_max_depth);
  h.gbt_learning_rate = j.value("gbt_learning_rate", d.gbt_learning_rate);
  h.gbt_subsample = j.value("gbt_subsample", d.gbt_subsample);
  h.gbt_lambda = j.value("gbt_lambda", d.gbt_lambda);
  h.gbt_min_child_weight = j.value("gbt_min_child_weight", d.gbt_min_child_weight);
  h.knn_k = j.value("knn_k", d.knn_k);
  h.lr_l2 = j.value("lr_l2", d.lr_l2);
  h.lr_tolerance = j.value("lr_tolerance", d.lr_tolerance);
  h.lr_max_iter = j.value("lr_max_iter", d.lr_max_iter);
  h.rf_trees = j.value("rf_trees", d.rf_trees);
  h.rf_max_features = j.value("rf_max_features", d.rf_max_features);
  h.rf_bootstrap = j.value("rf_bootstrap", d.rf_bootstrap);
  h.rf_min_leaf = j.value("rf_min_leaf", d.rf_min_leaf);
}

double Tree::evaluate(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

Standardizer Standardizer::fit(const DesignMatrix& m) {
  Standardizer s;
  s.mean.assign(m.n_cols, 0.0);
  s.scale.assign(m.n_cols, 1.0);
  if (m.n_rows == 0) return s;
  const double n = static_cast<double>(m.n_rows);
  for (std::size_t c = 0; c < m.n_cols; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < m.n_rows; ++r) sum += m.at(r, c);
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < m.n_rows; ++r) ss += (m.at(r, c) - mu) * (m.at(r, c) - mu);
    const double sd = std::sqrt(ss / n);
    s.mean[c] = mu;
    s.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - mean[c]) / scale[c];
  return out;
}

int argmax(std::span<const double> p) {
  int best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> p(scores.size());
  if (scores.empty()) return p;
  const double m = *std::max_element(scores.begin(), scores.end());
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) s += p[i] = std::exp(scores[i] - m);
  for (double& v : p) v /= s;
  return p;
}

double logistic_objective(const DesignMatrix& z, int n_classes, std::span<const double> w, double l2,
                          std::vector<double>* grad) {
  const std::size_t d = z.n_cols;
  const std::size_t stride = d + 1;
  const auto K = static_cast<std::size_t>(n_classes);
  if (w.size() != K * stride) throw ValidationError("weight vector has wrong size");
  if (grad) grad->assign(w.size(), 0.0);
  std::vector<double> logits(K);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.n_rows; ++i) {
    const auto x = z.row(i);
    for (std::size_t c = 0; c < K; ++c) {
      const double* wc = w.data() + c * stride;
      double s = wc[d];
      for (std::size_t j = 0; j < d; ++j) s += wc[j] * x[j];
      logits[c] = s;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double se = 0.0;
    for (double v : logits) se += std::exp(v - m);
    const double lse = m + std::log(se);
    const auto y = static_cast<std::size_t>(z.labels[i]);
    loss += lse - logits[y];
    if (grad) {
      for (std::size_t c = 0; c < K; ++c) {
        const double r = std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0);
        double* gc = grad->data() + c * stride;
        for (std::size_t j = 0; j < d; ++j) gc[j] += r * x[j];
        gc[d] += r;
      }
    }
  }
  const double n = z.n_rows > 0 ? static_cast<double>(z.n_rows) : 1.0;
  loss /= n;
  double pen = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = w[c * stride + j];
      pen += v * v;
      if (grad) (*grad)[c * stride + j] = (*grad)[c * stride + j] / n + l2 * v;
    }
    if (grad) (*grad)[c * stride + d] /= n;
  }
  return loss + 0.5 * l2 * pen;
}

TrainedModel::TrainedModel(ModelFamily family, Hyperparameters hyper, std::uint64_t seed, std::size_t n_features,
                           int n_classes, State state)
    : family_(family), hyper_(hyper), seed_(seed), n_features_(n_features), n_classes_(n_classes),
      state_(std::move(state)) {}

std::vector<double> TrainedModel::predict_proba(std::span<const double> row) const {
  if (row.size() != n_features_) {
    throw ValidationError("row has " + std::to_string(row.size()) + " features, model expects " +
                          std::to_string(n_features_));
  }
  const auto K = static_cast<std::size_t>(n_classes_);
  if (const auto* g = std::get_if<GbtState>(&state_)) {
    std::vector<double> scores(K, 0.0);
    for (std::size_t t = 0; t < g->trees.size(); ++t) scores[t % K] += g->learning_rate * g->trees[t].evaluate(row);
    return softmax(scores);
  }
  if (const auto* k = std::get_if<KnnState>(&state_)) {
    const auto z = k->scaler.apply(row);
    const std::size_t d = z.size();
    const std::size_t n = k->labels.size();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double e = k->rows[i * d + j] - z[j];
        s += e * e;
      }
      dist[i] = {s, i};
    }
    const auto kk = std::min(static_cast<std::size_t>(k->k), n);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    std::vector<double> p(K, 0.0);
    for (std::size_t i = 0; i < kk; ++i) p[static_cast<std::size_t>(k->labels[dist[i].second])] += 1.0;
    for (double& v : p) v /= static_cast<double>(kk);
    return p;
  }
  if (const auto* l = std::get_if<LrState>(&state_)) {
    const auto z = l->scaler.apply(row);
    const std::size_t stride = z.size() + 1;
    std::vector<double> scores(K);
    for (std::size_t c = 0; c < K; ++c) {
      const double* wc = l->weights.data() + c * stride;
      double s = wc[z.size()];
      for (std::size_t j = 0; j < z.size(); ++j) s += wc[j] * z[j];
      scores[c] = s;
    }
    return softmax(scores);
  }
  const auto& rf = std::get<RfState>(state_);
  std::vector<double> p(K, 0.0);
  for (const Tree& t : rf.trees) p[static_cast<std::size_t>(t.evaluate(row))] += 1.0;
  for (double& v : p) v /= static_cast<double>(rf.trees.size());
  return p;
}

int TrainedModel::predict(std::span<const double> row) const { return argmax(predict_proba(row)); }

nlohmann::json TrainedModel::to_json() const {
  json j{{"format", "barkscope-model"},
         {"version", kModelFormatVersion},
         {"family", std::string(barkscope::to_string(family_))},
         {"hyper", hyper_},
         {"seed", seed_},
         {"n_features", n_features_},
         {"n_classes", n_classes_}};
  json s;
  if (const auto* g = std::get_if<GbtState>(&state_)) {
    s["learning_rate"] = g->learning_rate;
    s["train_loss"] = g->train_loss;
    json trees = json::array();
    for (const Tree& t : g->trees) trees.push_back(tree_to_json(t));
    s["trees"] = std::move(trees);
  } else if (const auto* k = std::get_if<KnnState>(&state_)) {
    s = json{{"scaler", scaler_to_json(k->scaler)}, {"rows", k->rows}, {"labels", k->labels}, {"k", k->k}};
  } else if (const auto* l = std::get_if<LrState>(&state_)) {
    s = json{{"scaler", scaler_to_json(l->scaler)},
             {"weights", l->weights},
             {"iterations", l->iterations},
             {"gradient_norm", l->gradient_norm}};
  } else {
    json trees = json::array();
    for (const Tree& t : std::get<RfState>(state_).trees) trees.push_back(tree_to_json(t));
    s["trees"] = std::move(trees);
  }
  j["state"] = std::move(s);
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "barkscope-model") throw ValidationError("not a barkscope model");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw ValidationError("unsupported model version " + std::to_string(version));
    const ModelFamily family = family_from_string(j.at("family").get<std::string>());
    const auto hyper = j.at("hyper").get<Hyperparameters>();
    const auto seed = j.at("seed").get<std::uint64_t>();
    const auto n_features = j.at("n_features").get<std::size_t>();
    const int n_classes = j.at("n_classes").get<int>();
    const json& s = j.at("state");
    State state;
    switch (family) {
      case ModelFamily::gradient_boosted_trees: {
        GbtState g;
        g.learning_rate = s.at("learning_rate").get<double>();
        g.train_loss = s.at("train_loss").get<std::vector<double>>();
        for (const json& t : s.at("trees")) g.trees.push_back(tree_from_json(t));
        state = std::move(g);
        break;
      }
      case ModelFamily::k_nearest_neighbors: {
        KnnState k;
        k.scaler = scaler_from_json(s.at("scaler"));
        k.rows = s.at("rows").get<std::vector<double>>();
        k.labels = s.at("labels").get<std::vector<int>>();
        k.k = s.at("k").get<int>();
        state = std::move(k);
        break;
      }
      case ModelFamily::logistic_regression: {
        LrState l;
        l.scaler = scaler_from_json(s.at("scaler"));
        l.weights = s.at("weights").get<std::vector<double>>();
        l.iterations = s.at("iterations").get<int>();
        l.gradient_norm = s.at("gradient_norm").get<double>();
        state = std::move(l);
        break;
      }
      case ModelFamily::random_forest: {
        RfState r;
        for (const json& t : s.at("trees")) r.trees.push_back(tree_from_json(t));
        state = std::move(r);
        break;
      }
    }
    return TrainedModel(family, hyper, seed, n_features, n_classes, std::move(state));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model json: ") + e.what());
  }
}

void TrainedModel::save(const std::filesystem::path& path) const { write_file(path, to_json().dump() + "\n"); }

TrainedModel TrainedModel::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

TrainedModel train(ModelFamily family, const DesignMatrix& data, const Hyperparameters& hyper, std::uint64_t seed,
                   int n_classes) {
  if (data.n_rows == 0) throw ValidationError("cannot train on an empty matrix");
  if (data.labels.size() != data.n_rows || data.values.size() != data.n_rows * data.n_cols) {
    throw ValidationError("design matrix shape is inconsistent");
  }
  const int K = infer_classes(data, n_classes);
  for (double v : data.values) {
    if (!std::isfinite(v)) throw ValidationError("design matrix contains a non-finite value");
  }
  const bool needs_classes =
      family == ModelFamily::gradient_boosted_trees || family == ModelFamily::logistic_regression;
  if (needs_classes && distinct_labels(data) < 2) {
    throw ValidationError(std::string(to_string(family)) + " needs at least two distinct labels");
  }
  TrainedModel::State state;
  switch (family) {
    case ModelFamily::gradient_boosted_trees: state = train_gbt(data, hyper, seed, K); break;
    case ModelFamily::k_nearest_neighbors: state = train_knn(data, hyper); break;
    case ModelFamily::logistic_regression: state = train_lr(data, hyper, K); break;
    case ModelFamily::random_forest: state = train_rf(data, hyper, seed, K); break;
  }
  return TrainedModel(family, hyper, seed, data.n_cols, K, std::move(state));
}

namespace {

std::vector<std::vector<std::size_t>> deal(const std::vector<std::size_t>& order, int n_folds) {
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % folds.size()].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

FoldAssignment stratified_folds(const DesignMatrix& data, int n_folds, std::uint64_t seed, int K) {
  Rng rng(mix_seed(seed, "folds"));
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < data.n_rows; ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> order;
  bool complete = true;
  for (auto& rows : by_class) {
    rng.shuffle(rows);
    if (!rows.empty() && rows.size() < static_cast<std::size_t>(n_folds)) complete = false;
    order.insert(order.end(), rows.begin(), rows.end());
  }
  FoldAssignment fa;
  if (complete) {
    fa.folds = deal(order, n_folds);
    return fa;
  }
  std::vector<std::size_t> all(data.n_rows);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all);
  fa.folds = deal(all, n_folds);
  fa.stratified = false;
  return fa;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

FoldAssignment assign_folds(const DesignMatrix& data, int n_folds, std::uint64_t seed, FoldMode mode, int n_classes) {
  if (n_folds < 2) throw ValidationError("need at least 2 folds");
  if (data.n_rows < static_cast<std::size_t>(n_folds)) {
    throw ValidationError(std::to_string(data.n_rows) + " rows cannot fill " + std::to_string(n_folds) + " folds");
  }
  const int K = infer_classes(data, n_classes);
  if (mode == FoldMode::stratified) return stratified_folds(data, n_folds, seed, K);

  UnionFind uf(data.n_rows);
  std::map<std::string, std::size_t> first_row;
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    if (i >= data.row_groups.size()) break;
    for (const std::string& g : data.row_groups[i]) {
      auto [it, inserted] = first_row.emplace(g, i);
      if (!inserted) uf.unite(i, it->second);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> comps;
  for (std::size_t i = 0; i < data.n_rows; ++i) comps[uf.find(i)].push_back(i);
  if (comps.size() < static_cast<std::size_t>(n_folds)) {
    FoldAssignment fa = stratified_folds(data, n_folds, seed, K);
    fa.mode = FoldMode::stratified;
    return fa;
  }
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [root, rows] : comps) groups.push_back(std::move(rows));
  Rng rng(mix_seed(seed, "group-folds"));
  rng.shuffle(groups);
  std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  FoldAssignment fa;
  fa.mode = FoldMode::group_by_clip;
  fa.stratified = false;
  fa.folds.resize(static_cast<std::size_t>(n_folds));
  for (const auto& g : groups) {
    auto target = std::min_element(fa.folds.begin(), fa.folds.end(),
                                   [](const auto& a, const auto& b) { return a.size() < b.size(); });
    target->insert(target->end(), g.begin(), g.end());
  }
  for (auto& f : fa.folds) std::sort(f.begin(), f.end());
  return fa;
}

nlohmann::json CVReport::to_json() const {
  return json{{"feature_set", feature_set},
              {"family", std::string(barkscope::to_string(family))},
              {"fold_accuracies", fold_accuracies},
              {"mean_accuracy", mean_accuracy},
              {"confusion", confusion},
              {"fold_mode", std::string(barkscope::to_string(fold_mode))},
              {"stratified", stratified}};
}

CVReport cross_validate(const DesignMatrix& data, ModelFamily family, const Hyperparameters& hyper, int n_folds,
                        std::uint64_t seed, FoldMode mode, int n_classes) {
  const int K = infer_classes(data, n_classes);
  const FoldAssignment fa = assign_folds(data, n_folds, seed, mode, K);
  CVReport rep;
  rep.family = family;
  rep.fold_mode = fa.mode;
  rep.stratified = fa.stratified;
  rep.confusion.assign(static_cast<std::size_t>(K), std::vector<std::size_t>(static_cast<std::size_t>(K), 0));
  std::vector<char> is_test(data.n_rows);
  for (std::size_t f = 0; f < fa.folds.size(); ++f) {
    std::fill(is_test.begin(), is_test.end(), 0);
    for (std::size_t i : fa.folds[f]) is_test[i] = 1;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < data.n_rows; ++i) {
      if (!is_test[i]) train_rows.push_back(i);
    }
    const TrainedModel model = train(family, data.subset(train_rows), hyper, mix_seed(seed, f), K);
    std::size_t correct = 0;
    for (std::size_t i : fa.folds[f]) {
      const int pred = model.predict(data.row(i));
      ++rep.confusion[static_cast<std::size_t>(data.labels[i])][static_cast<std::size_t>(pred)];
      if (pred == data.labels[i]) ++correct;
    }
    rep.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(fa.folds[f].size()));
  }
  rep.mean_accuracy = std::accumulate(rep.fold_accuracies.begin(), rep.fold_accuracies.end(), 0.0) /
                      static_cast<double>(rep.fold_accuracies.size());
  return rep;
}

std::vector<GridCell> accuracy_grid(const std::vector<NamedMatrix>& sets, const std::vector<ModelFamily>& families,
                                    const Hyperparameters& hyper, int n_folds, std::uint64_t seed, FoldMode mode,
                                    int n_classes) {
  std::vector<GridCell> grid;
  for (const NamedMatrix& s : sets) {
    for (ModelFamily f : families) {
      GridCell cell;
      cell.feature_set = s.feature_set;
      cell.family = f;
      try {
        CVReport r = cross_validate(s.data, f, hyper, n_folds, seed, mode, n_classes);
        r.feature_set = s.feature_set;
        cell.report = std::move(r);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      grid.push_back(std::move(cell));
    }
  }
  return grid;
}

std::string grid_csv(const std::vector<GridCell>& grid, const std::vector<ModelFamily>& families) {
  std::ostringstream out;
  out << "feature_set";
  for (ModelFamily f : families) out << ',' << short_name(f);
  out << '\n';
  std::vector<std::string> sets;
  for (const GridCell& c : grid) {
    if (std::find(sets.begin(), sets.end(), c.feature_set) == sets.end()) sets.push_back(c.feature_set);
  }
  for (const std::string& s : sets) {
    out << s;
    for (ModelFamily f : families) {
      out << ',';
      auto it = std::find_if(grid.begin(), grid.end(),
                             [&](const GridCell& c) { return c.feature_set == s && c.family == f; });
      if (it == grid.end() || !it->report) {
        out << "ERR";
      } else {
        out << format_fixed(it->report->mean_accuracy, 4);
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace barkscope
