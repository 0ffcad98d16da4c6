#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "itr/rng.hpp"

namespace itr {

struct TreeNode {
  int split_feature = -1;  // -1 marks a leaf
  double split_threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;
  bool is_leaf() const { return split_feature < 0; }
};

struct ForestConfig {
  int n_trees = 500;
  int max_depth = 32;
  int min_leaf_size = 5;
  int features_per_split = 0;  // 0 => ceil(sqrt(d))
  double subsample_fraction = 0.632;
  bool honesty = false;  // causal forest only
  std::uint64_t seed = 0;
};

struct BoostConfig {
  int n_rounds = 200;
  double learning_rate = 0.1;
  int max_depth = 3;
  int min_leaf_size = 5;
  double l2_leaf_penalty = 1.0;
  double subsample_fraction = 1.0;
  std::uint64_t seed = 0;
};

enum class BoostLoss { squared, logistic };

namespace detail {

// A fitted regression tree over gradient/hessian statistics. Squared-loss
// trees use g = w*y, h = w, so leaves hold weighted means.
struct Tree {
  std::vector<TreeNode> nodes;

  template <typename Row>
  int leaf_index(const Row& x) const {
    int idx = 0;
    while (!nodes[idx].is_leaf())
      idx = x[nodes[idx].split_feature] <= nodes[idx].split_threshold ? nodes[idx].left
                                                                      : nodes[idx].right;
    return idx;
  }

  template <typename Row>
  double predict_row(const Row& x) const {
    return nodes[leaf_index(x)].leaf_value;
  }
};

struct GrowParams {
  int max_depth;
  int min_leaf_size;
  int features_per_split;  // <= 0 => all features
  double l2 = 0.0;
};

// Greedy exact split search maximizing sum_child (sum g)^2 / (sum h + l2).
// Ties broken toward the lowest feature index, then lowest threshold, by
// scanning in order and requiring strict improvement.
class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
             GrowParams params, Rng& rng)
      : x_(x), g_(g), h_(h), params_(params), rng_(rng) {}

  Tree grow(std::vector<int> rows) {
    Tree tree;
    grow_node(tree, std::move(rows), 0);
    return tree;
  }

 private:
  static double leaf_score(double gs, double hs, double l2) {
    return gs * gs / (hs + l2);
  }

  int grow_node(Tree& tree, std::vector<int> rows, int depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double gs = 0.0, hs = 0.0;
    for (int i : rows) {
      gs += g_[i];
      hs += h_[i];
    }
    const double value = hs + params_.l2 > 0.0 ? gs / (hs + params_.l2) : 0.0;
    tree.nodes[node_id].leaf_value = value;

    const int m = static_cast<int>(rows.size());
    if (depth >= params_.max_depth || m < 2 * params_.min_leaf_size) return node_id;

    const int d = static_cast<int>(x_.cols());
    std::vector<int> features;
    if (params_.features_per_split <= 0 || params_.features_per_split >= d) {
      features.resize(d);
      std::iota(features.begin(), features.end(), 0);
    } else {
      // Sample without replacement, then sort for the deterministic
      // lowest-index tie-break.
      std::vector<int> pool(d);
      std::iota(pool.begin(), pool.end(), 0);
      for (int k = 0; k < params_.features_per_split; ++k) {
        const int r = k + static_cast<int>(rng_.uniform_int(d - k));
        std::swap(pool[k], pool[r]);
      }
      features.assign(pool.begin(), pool.begin() + params_.features_per_split);
      std::sort(features.begin(), features.end());
    }

    const double parent_score = leaf_score(gs, hs, params_.l2);
    double best_gain = 1e-12;  // require a strictly positive gain
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<int> sorted = rows;
    for (int f : features) {
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        const double xa = x_(a, f), xb = x_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      double gl = 0.0, hl = 0.0;
      for (int k = 0; k + 1 < m; ++k) {
        const int i = sorted[k];
        gl += g_[i];
        hl += h_[i];
        const double xv = x_(i, f), xn = x_(sorted[k + 1], f);
        if (xv == xn) continue;
        if (k + 1 < params_.min_leaf_size || m - k - 1 < params_.min_leaf_size) continue;
        const double gain = leaf_score(gl, hl, params_.l2) +
                            leaf_score(gs - gl, hs - hl, params_.l2) - parent_score;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = xv + 0.5 * (xn - xv);
        }
      }
    }

    if (best_feature < 0) return node_id;

    std::vector<int> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (int i : rows)
      (x_(i, best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
    rows.clear();
    rows.shrink_to_fit();

    const int left_id = grow_node(tree, std::move(left_rows), depth + 1);
    const int right_id = grow_node(tree, std::move(right_rows), depth + 1);
    tree.nodes[node_id].split_feature = best_feature;
    tree.nodes[node_id].split_threshold = best_threshold;
    tree.nodes[node_id].left = left_id;
    tree.nodes[node_id].right = right_id;
    return node_id;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& g_;
  const Eigen::VectorXd& h_;
  GrowParams params_;
  Rng& rng_;
};

inline std::vector<int> subsample_rows(int n, double fraction, Rng& rng) {
  const int m = std::max(1, static_cast<int>(std::floor(fraction * n)));
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < m; ++k) {
    const int r = k + static_cast<int>(rng.uniform_int(n - k));
    std::swap(pool[k], pool[r]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace detail

class RandomForestModel {
 public:
  RandomForestModel() = default;
  RandomForestModel(std::vector<detail::Tree> trees, double y_min, double y_max)
      : trees_(std::move(trees)), y_min_(y_min), y_max_(y_max) {}

  double predict_row(const Eigen::RowVectorXd& x) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict_row(x);
    return s / static_cast<double>(trees_.size());
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_row(x.row(i));
    return out;
  }

  double response_min() const { return y_min_; }
  double response_max() const { return y_max_; }
  std::size_t n_trees() const { return trees_.size(); }

 private:
  std::vector<detail::Tree> trees_;
  double y_min_ = 0.0, y_max_ = 0.0;
};

inline RandomForestModel fit_random_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& weights,
                                           const ForestConfig& config) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (y.size() != n) throw std::invalid_argument("fit_random_forest: shape mismatch");
  if (config.n_trees < 1 || config.subsample_fraction <= 0.0 ||
      config.subsample_fraction > 1.0)
    throw std::invalid_argument("fit_random_forest: invalid config");
  if (n < 2 * config.min_leaf_size)
    throw std::invalid_argument("fit_random_forest: too few observations for min_leaf_size");
  const Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(n);

  const Eigen::VectorXd g = w.array() * y.array();
  detail::GrowParams params;
  params.max_depth = config.max_depth;
  params.min_leaf_size = config.min_leaf_size;
  params.features_per_split = config.features_per_split > 0
                                  ? std::min(config.features_per_split, d)
                                  : static_cast<int>(std::ceil(std::sqrt(d)));
  std::vector<detail::Tree> trees;
  trees.reserve(config.n_trees);
  for (int t = 0; t < config.n_trees; ++t) {
    Rng rng(derive_seed(config.seed, "rf_tree", static_cast<std::uint64_t>(t)));
    auto rows = detail::subsample_rows(n, config.subsample_fraction, rng);
    detail::TreeGrower grower(x, g, w, params, rng);
    trees.push_back(grower.grow(std::move(rows)));
  }
  return RandomForestModel(std::move(trees), y.minCoeff(), y.maxCoeff());
}

class GradientBoostingModel {
 public:
  GradientBoostingModel() = default;
  GradientBoostingModel(double base_score, double learning_rate,
                        std::vector<detail::Tree> trees, BoostLoss loss)
      : base_score_(base_score), lr_(learning_rate), trees_(std::move(trees)), loss_(loss) {}

  // Raw additive score (log-odds scale for logistic loss).
  double score_row(const Eigen::RowVectorXd& x) const {
    double s = base_score_;
    for (const auto& t : trees_) s += lr_ * t.predict_row(x);
    return s;
  }

  double predict_row(const Eigen::RowVectorXd& x) const {
    const double s = score_row(x);
    return loss_ == BoostLoss::logistic ? 1.0 / (1.0 + std::exp(-s)) : s;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_row(x.row(i));
    return out;
  }

  std::size_t n_rounds() const { return trees_.size(); }

 private:
  double base_score_ = 0.0;
  double lr_ = 0.1;
  std::vector<detail::Tree> trees_;
  BoostLoss loss_ = BoostLoss::squared;
};

inline GradientBoostingModel fit_gradient_boosting(const Eigen::MatrixXd& x,
                                                   const Eigen::VectorXd& y,
                                                   const Eigen::VectorXd& weights,
                                                   const BoostConfig& config, BoostLoss loss) {
  const int n = static_cast<int>(x.rows());
  if (y.size() != n) throw std::invalid_argument("fit_gradient_boosting: shape mismatch");
  if (config.n_rounds < 0 || config.learning_rate <= 0.0 || config.learning_rate > 1.0 ||
      config.l2_leaf_penalty < 0.0 || config.subsample_fraction <= 0.0 ||
      config.subsample_fraction > 1.0)
    throw std::invalid_argument("fit_gradient_boosting: invalid config");
  if (n < 2 * config.min_leaf_size)
    throw std::invalid_argument("fit_gradient_boosting: too few observations for min_leaf_size");
  const Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(n);
  const double w_sum = w.sum();

  double base;
  if (loss == BoostLoss::squared) {
    base = y.dot(w) / w_sum;
  } else {
    for (int i = 0; i < n; ++i)
      if (y[i] != 0.0 && y[i] != 1.0)
        throw std::invalid_argument("fit_gradient_boosting: logistic loss needs 0/1 response");
    const double p = std::clamp(y.dot(w) / w_sum, 1e-5, 1.0 - 1e-5);
    base = std::log(p / (1.0 - p));
  }

  Eigen::VectorXd score = Eigen::VectorXd::Constant(n, base);
  detail::GrowParams params;
  params.max_depth = config.max_depth;
  params.min_leaf_size = config.min_leaf_size;
  params.features_per_split = 0;  // all features
  params.l2 = config.l2_leaf_penalty;

  std::vector<detail::Tree> trees;
  trees.reserve(config.n_rounds);
  Eigen::VectorXd g(n), h(n);
  for (int round = 0; round < config.n_rounds; ++round) {
    if (loss == BoostLoss::squared) {
      g = w.array() * (y - score).array();
      h = w;
    } else {
      for (int i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-score[i]));
        g[i] = w[i] * (y[i] - p);
        h[i] = std::max(w[i] * p * (1.0 - p), 1e-12);
      }
    }
    Rng rng(derive_seed(config.seed, "gbt_round", static_cast<std::uint64_t>(round)));
    auto rows = config.subsample_fraction < 1.0
                    ? detail::subsample_rows(n, config.subsample_fraction, rng)
                    : [n] {
                        std::vector<int> all(n);
                        std::iota(all.begin(), all.end(), 0);
                        return all;
                      }();
    detail::TreeGrower grower(x, g, h, params, rng);
    detail::Tree tree = grower.grow(std::move(rows));
    for (int i = 0; i < n; ++i)
      score[i] += config.learning_rate * tree.predict_row(x.row(i));
    trees.push_back(std::move(tree));
  }
  return GradientBoostingModel(base, config.learning_rate, std::move(trees), loss);
}

}  // namespace itr
