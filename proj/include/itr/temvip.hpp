#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "itr/cate.hpp"
#include "itr/dataset.hpp"
#include "itr/rng.hpp"

namespace itr {

struct TemVipEstimate {
  int covariate_index = 0;
  double psi_hat = 0.0;
  double std_err = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
  bool selected = false;
  bool error = false;  // zero-variance covariate
};

enum class TemVipNuisanceMode { rct_lasso_interactions, observational_super_learner };

struct TemVipConfig {
  double fdr_level = 0.05;
  TemVipNuisanceMode nuisance_mode = TemVipNuisanceMode::rct_lasso_interactions;
  int cross_fit_folds = 5;
  double pi_floor = kPiFloor;
  CateConfig cate;  // learner hyperparameters for the nuisance fits
};

namespace detail {

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

// Per-covariate one-step TEM-VIP: the slope of the AIPW pseudo-outcome on the
// centered covariate, with an influence-function (sandwich) standard error.
// p_adjusted/selected are filled in by apply_bh below.
inline std::vector<TemVipEstimate> estimate_temvip_all(const Dataset& data,
                                                       const NuisanceValues& nuisances) {
  detail::validate_dataset(data);
  const Eigen::Index n = data.n(), p = data.p();
  if (nuisances.mu0.size() != n || nuisances.mu1.size() != n || nuisances.pi.size() != n)
    throw std::invalid_argument("estimate_temvip_all: nuisance length mismatch");

  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i)
    t[i] = aipw_transform(data.a[i], data.y[i], nuisances.mu0[i], nuisances.mu1[i],
                          nuisances.pi[i]);
  const Eigen::VectorXd tc = t.array() - t.mean();

  std::vector<TemVipEstimate> out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    TemVipEstimate& e = out[j];
    e.covariate_index = static_cast<int>(j);
    if (data.w.col(j).maxCoeff() == data.w.col(j).minCoeff()) {
      e.error = true;
      continue;
    }
    const Eigen::VectorXd wc = data.w.col(j).array() - data.w.col(j).mean();
    const double var_w = wc.squaredNorm() / static_cast<double>(n);
    e.psi_hat = wc.dot(tc) / wc.squaredNorm();
    double sum_sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double phi = wc[i] * (tc[i] - e.psi_hat * wc[i]) / var_w;
      sum_sq += phi * phi;
    }
    e.std_err = std::sqrt(sum_sq) / static_cast<double>(n);
    if (e.std_err > 0.0) {
      const double z = std::abs(e.psi_hat) / e.std_err;
      e.p_value = std::min(1.0, 2.0 * detail::normal_sf(z));
    } else {
      e.p_value = e.psi_hat == 0.0 ? 1.0 : 0.0;
    }
  }
  return out;
}

inline std::vector<TemVipEstimate> estimate_temvip_all(const Dataset& data,
                                                       const NuisanceEstimates& nuisances) {
  detail::validate_dataset(data);
  NuisanceValues values;
  values.mu0 = nuisances.mu0(data.w);
  values.mu1 = nuisances.mu1(data.w);
  values.pi = nuisances.pi(data.w);
  values.pi_known = nuisances.pi_known;
  return estimate_temvip_all(data, values);
}

// Benjamini-Hochberg step-up adjustment; rejections use a strict inequality.
inline std::pair<Eigen::VectorXd, std::vector<int>> bh_adjust(const Eigen::VectorXd& p_values,
                                                              double level) {
  const Eigen::Index m = p_values.size();
  for (Eigen::Index i = 0; i < m; ++i)
    if (!(p_values[i] >= 0.0 && p_values[i] <= 1.0))
      throw std::invalid_argument("bh_adjust: p-values must lie in [0,1]");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("bh_adjust: level must lie in (0,1)");

  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return p_values[a] < p_values[b]; });

  Eigen::VectorXd adjusted(m);
  double running = 1.0;
  for (Eigen::Index k = m - 1; k >= 0; --k) {
    // m/k first so the rank-m term is exactly the raw p-value.
    const double scaled =
        p_values[order[k]] * (static_cast<double>(m) / static_cast<double>(k + 1));
    running = std::min(running, scaled);
    adjusted[order[k]] = std::min(1.0, running);
  }
  std::vector<int> rejected;
  for (Eigen::Index j = 0; j < m; ++j)
    if (adjusted[j] < level) rejected.push_back(static_cast<int>(j));
  return {std::move(adjusted), std::move(rejected)};
}

// Fills p_adjusted/selected from a BH pass over the non-error estimates.
inline void apply_bh(std::vector<TemVipEstimate>& estimates, double level) {
  std::vector<Eigen::Index> valid;
  for (std::size_t j = 0; j < estimates.size(); ++j)
    if (!estimates[j].error) valid.push_back(static_cast<Eigen::Index>(j));
  if (valid.empty()) return;
  Eigen::VectorXd p(static_cast<Eigen::Index>(valid.size()));
  for (std::size_t k = 0; k < valid.size(); ++k) p[static_cast<Eigen::Index>(k)] = estimates[valid[k]].p_value;
  const auto [adjusted, rejected] = bh_adjust(p, level);
  for (std::size_t k = 0; k < valid.size(); ++k) {
    estimates[valid[k]].p_adjusted = adjusted[static_cast<Eigen::Index>(k)];
    estimates[valid[k]].selected = adjusted[static_cast<Eigen::Index>(k)] < level;
  }
}

// Cross-fitted LASSO-with-interactions outcome nuisances for the RCT mode;
// the assignment mechanism is known, so only mu is fit.
inline NuisanceValues estimate_nuisances_lasso_interactions(const Dataset& data,
                                                            const Eigen::VectorXd& known_pi,
                                                            const CateConfig& config = {}) {
  detail::validate_dataset(data);
  detail::validate_pi(data, known_pi);
  const Eigen::Index n = data.n(), p = data.p();

  NuisanceValues out;
  out.mu0.resize(n);
  out.mu1.resize(n);
  out.pi = known_pi;
  out.pi_known = true;
  for (Eigen::Index i = 0; i < n; ++i) out.pi[i] = detail::clamp_pi(out.pi[i]);

  Eigen::MatrixXd x(n, 1 + 2 * p);
  x.col(0) = data.a;
  x.middleCols(1, p) = data.w;
  x.middleCols(1 + p, p) = data.w.array().colwise() * data.a.array();
  Eigen::VectorXd factors = Eigen::VectorXd::Ones(1 + 2 * p);
  factors[0] = 0.0;

  const int folds = config.cross_fit ? config.cross_fit_folds : 1;
  std::vector<int> fold_of(n, 0);
  if (folds > 1) fold_of = detail::crossfit_folds(n, folds, derive_seed(config.seed, "tv_nuis"));
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    if (folds == 1) {
      train.resize(n);
      std::iota(train.begin(), train.end(), 0);
      test = train;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    }
    const auto fit = detail::cv_lasso(
        x(train, Eigen::all), data.y(train), Family::gaussian, {}, true, config,
        derive_seed(config.seed, "tv_mu", static_cast<std::uint64_t>(f)), factors);
    Eigen::MatrixXd x_test = x(test, Eigen::all);
    x_test.col(0).setZero();
    x_test.middleCols(1 + p, p).setZero();
    const Eigen::VectorXd mu0 = predict_linear(fit, x_test);
    x_test.col(0).setOnes();
    x_test.middleCols(1 + p, p) = data.w(test, Eigen::all);
    const Eigen::VectorXd mu1 = predict_linear(fit, x_test);
    for (std::size_t k = 0; k < test.size(); ++k) {
      out.mu0[test[k]] = mu0[k];
      out.mu1[test[k]] = mu1[k];
    }
  }
  return out;
}

// Full per-covariate report given precomputed nuisances.
inline std::vector<TemVipEstimate> temvip_report(const Dataset& data,
                                                 const NuisanceValues& nuisances,
                                                 double fdr_level = 0.05) {
  auto estimates = estimate_temvip_all(data, nuisances);
  apply_bh(estimates, fdr_level);
  return estimates;
}

inline std::vector<int> selected_indices(const std::vector<TemVipEstimate>& estimates) {
  std::vector<int> out;
  for (const auto& e : estimates)
    if (e.selected) out.push_back(e.covariate_index);
  return out;
}

// Two-stage filter: builds nuisances per config and returns the BH-selected
// covariate indices. `known_pi` is required in the RCT mode.
inline std::vector<int> filter_covariates(const Dataset& data, const TemVipConfig& config,
                                          const std::optional<Eigen::VectorXd>& known_pi,
                                          std::uint64_t seed) {
  CateConfig cc = config.cate;
  cc.seed = seed;
  cc.cross_fit_folds = config.cross_fit_folds;
  NuisanceValues nuisances;
  if (config.nuisance_mode == TemVipNuisanceMode::rct_lasso_interactions) {
    if (!known_pi)
      throw std::invalid_argument("filter_covariates: RCT mode needs the known propensity");
    nuisances = estimate_nuisances_lasso_interactions(data, *known_pi, cc);
  } else {
    nuisances = estimate_nuisances(data, known_pi, cc);
  }
  return selected_indices(temvip_report(data, nuisances, config.fdr_level));
}

// Restricts W to `selected` and delegates to `fitter`. An empty selection
// degrades to a single all-zero column, which every strategy fits as an
// intercept-only (constant-CATE) model. The filter's selection is recorded
// as the model's TEM classification.
inline CateModel fit_filtered(const Dataset& data, const std::vector<int>& selected,
                              const std::function<CateModel(const Dataset&)>& fitter) {
  detail::validate_dataset(data);
  const Eigen::Index n = data.n();
  for (int j : selected)
    if (j < 0 || j >= data.p()) throw std::invalid_argument("fit_filtered: index out of range");

  Dataset reduced = data;
  if (selected.empty()) {
    reduced.w = Eigen::MatrixXd::Zero(n, 1);
  } else {
    reduced.w.resize(n, static_cast<Eigen::Index>(selected.size()));
    for (std::size_t k = 0; k < selected.size(); ++k)
      reduced.w.col(static_cast<Eigen::Index>(k)) = data.w.col(selected[k]);
  }

  CateModel inner = fitter(reduced);
  CateModel model;
  model.strategy = inner.strategy;
  model.diagnostics = inner.diagnostics;
  model.builtin_tems = selected;
  const std::vector<int> cols = selected;
  const auto inner_fn = inner.cate_fn;
  model.cate_fn = [cols, inner_fn](const Eigen::MatrixXd& w) {
    if (cols.empty()) return inner_fn(Eigen::MatrixXd::Zero(w.rows(), 1));
    Eigen::MatrixXd sub(w.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
      sub.col(static_cast<Eigen::Index>(k)) = w.col(cols[k]);
    return inner_fn(sub);
  };
  return model;
}

}  // namespace itr
