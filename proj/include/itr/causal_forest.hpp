#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "itr/rng.hpp"
#include "itr/trees.hpp"

namespace itr {

// Honest causal tree: structure grown on one half of the subsample by
// maximizing heterogeneity of child-level residual-on-residual slopes,
// leaf membership recorded on the other half for weighted aggregation.
namespace detail {

struct CausalTree {
  std::vector<TreeNode> nodes;
  std::vector<std::vector<int>> leaf_members;  // estimation-sample rows per node

  template <typename Row>
  int leaf_index(const Row& x) const {
    int idx = 0;
    while (!nodes[idx].is_leaf())
      idx = x[nodes[idx].split_feature] <= nodes[idx].split_threshold ? nodes[idx].left
                                                                      : nodes[idx].right;
    return idx;
  }
};

}  // namespace detail

class CausalForestModel {
 public:
  struct Diagnostics {
    long fallback_predictions = 0;  // degenerate neighborhood, global slope used
  };

  CausalForestModel() = default;
  CausalForestModel(std::vector<detail::CausalTree> trees, Eigen::VectorXd y_resid,
                    Eigen::VectorXd a_resid, double global_slope, ForestConfig config)
      : trees_(std::move(trees)),
        y_resid_(std::move(y_resid)),
        a_resid_(std::move(a_resid)),
        global_slope_(global_slope),
        config_(std::move(config)) {}

  // Forest-weighted Robinson slope at x.
  double predict_cate_row(const Eigen::RowVectorXd& x) const {
    if (trees_.empty()) return global_slope_;
    // Accumulate leaf-co-occurrence weights alpha_i(x).
    double num = 0.0, den = 0.0;
    for (const auto& tree : trees_) {
      const int leaf = tree.leaf_index(x);
      const auto& members = tree.leaf_members[leaf];
      if (members.empty()) continue;
      const double inv = 1.0 / static_cast<double>(members.size());
      for (int i : members) {
        num += inv * y_resid_[i] * a_resid_[i];
        den += inv * a_resid_[i] * a_resid_[i];
      }
    }
    if (den < 1e-10) {
      ++diagnostics_.fallback_predictions;
      return global_slope_;
    }
    return num / den;
  }

  Eigen::VectorXd predict_cate(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_cate_row(x.row(i));
    return out;
  }

  double global_slope() const { return global_slope_; }
  const Diagnostics& diagnostics() const { return diagnostics_; }
  std::size_t n_trees() const { return trees_.size(); }

 private:
  std::vector<detail::CausalTree> trees_;
  Eigen::VectorXd y_resid_;
  Eigen::VectorXd a_resid_;
  double global_slope_ = 0.0;
  ForestConfig config_;
  mutable Diagnostics diagnostics_;
};

namespace detail {

// Grows one causal tree on structure rows; splits maximize the
// between-child spread of residual-on-residual slopes.
class CausalTreeGrower {
 public:
  CausalTreeGrower(const Eigen::MatrixXd& x, const Eigen::VectorXd& yr, const Eigen::VectorXd& ar,
                   const ForestConfig& config, Rng& rng)
      : x_(x), yr_(yr), ar_(ar), config_(config), rng_(rng) {
    mtry_ = config.features_per_split > 0
                ? std::min<int>(config.features_per_split, static_cast<int>(x.cols()))
                : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  }

  CausalTree grow(std::vector<int> structure_rows, const std::vector<int>& estimation_rows) {
    CausalTree tree;
    grow_node(tree, std::move(structure_rows), 0);
    // Route the estimation half into the finished structure.
    tree.leaf_members.resize(tree.nodes.size());
    for (int i : estimation_rows) tree.leaf_members[tree.leaf_index(x_.row(i))].push_back(i);
    return tree;
  }

 private:
  int grow_node(CausalTree& tree, std::vector<int> rows, int depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    const int m = static_cast<int>(rows.size());
    if (depth >= config_.max_depth || m < 2 * config_.min_leaf_size) return node_id;

    const int d = static_cast<int>(x_.cols());
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);
    if (mtry_ < d) {
      for (int k = 0; k < mtry_; ++k) {
        const int r = k + static_cast<int>(rng_.uniform_int(d - k));
        std::swap(features[k], features[r]);
      }
      features.resize(mtry_);
      std::sort(features.begin(), features.end());
    }

    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<int> sorted = rows;
    for (int f : features) {
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        const double xa = x_(a, f), xb = x_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      double num_l = 0.0, den_l = 0.0, num_t = 0.0, den_t = 0.0;
      for (int i : sorted) {
        num_t += yr_[i] * ar_[i];
        den_t += ar_[i] * ar_[i];
      }
      for (int k = 0; k + 1 < m; ++k) {
        const int i = sorted[k];
        num_l += yr_[i] * ar_[i];
        den_l += ar_[i] * ar_[i];
        const double xv = x_(i, f), xn = x_(sorted[k + 1], f);
        if (xv == xn) continue;
        const int nl = k + 1, nr = m - k - 1;
        if (nl < config_.min_leaf_size || nr < config_.min_leaf_size) continue;
        const double den_r = den_t - den_l;
        if (den_l < 1e-8 || den_r < 1e-8) continue;  // single-arm child
        const double slope_l = num_l / den_l;
        const double slope_r = (num_t - num_l) / den_r;
        const double diff = slope_l - slope_r;
        const double gain = static_cast<double>(nl) * nr / m * diff * diff;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = xv + 0.5 * (xn - xv);
        }
      }
    }

    if (best_feature < 0) return node_id;

    std::vector<int> left_rows, right_rows;
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
  const Eigen::VectorXd& yr_;
  const Eigen::VectorXd& ar_;
  const ForestConfig& config_;
  Rng& rng_;
  int mtry_;
};

}  // namespace detail

// `mu_hat` is the marginal outcome surface m(W) ~ E[Y|W] evaluated at the
// training rows; `pi_hat` the propensity evaluated there.
inline CausalForestModel fit_causal_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& a,
                                           const Eigen::VectorXd& mu_hat,
                                           const Eigen::VectorXd& pi_hat,
                                           const ForestConfig& config) {
  const int n = static_cast<int>(x.rows());
  if (y.size() != n || a.size() != n || mu_hat.size() != n || pi_hat.size() != n)
    throw std::invalid_argument("fit_causal_forest: shape mismatch");
  for (int i = 0; i < n; ++i) {
    if (a[i] != 0.0 && a[i] != 1.0)
      throw std::invalid_argument("fit_causal_forest: treatment must be 0/1");
    if (pi_hat[i] <= 0.0 || pi_hat[i] >= 1.0)
      throw std::invalid_argument("fit_causal_forest: propensity outside (0,1)");
  }
  if (config.n_trees < 0 || config.subsample_fraction <= 0.0 || config.subsample_fraction > 1.0)
    throw std::invalid_argument("fit_causal_forest: invalid config");

  Eigen::VectorXd yr = y - mu_hat;
  Eigen::VectorXd ar = a - pi_hat;
  const double den = ar.squaredNorm();
  const double global_slope = den > 1e-12 ? yr.dot(ar) / den : 0.0;

  std::vector<detail::CausalTree> trees;
  trees.reserve(config.n_trees);
  for (int t = 0; t < config.n_trees; ++t) {
    Rng rng(derive_seed(config.seed, "cf_tree", static_cast<std::uint64_t>(t)));
    auto sample = detail::subsample_rows(n, config.subsample_fraction, rng);
    std::vector<int> structure = sample, estimation = sample;
    if (config.honesty && sample.size() >= 4) {
      const std::size_t half = sample.size() / 2;
      structure.assign(sample.begin(), sample.begin() + half);
      estimation.assign(sample.begin() + half, sample.end());
    }
    detail::CausalTreeGrower grower(x, yr, ar, config, rng);
    trees.push_back(grower.grow(std::move(structure), estimation));
  }
  return CausalForestModel(std::move(trees), std::move(yr), std::move(ar), global_slope, config);
}

}  // namespace itr
