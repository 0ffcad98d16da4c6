#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "itr/causal_forest.hpp"
#include "itr/dataset.hpp"
#include "itr/elastic_net.hpp"
#include "itr/rng.hpp"
#include "itr/super_learner.hpp"
#include "itr/trees.hpp"

namespace itr {

constexpr double kPiFloor = 0.01;

enum class Strategy {
  plugin_lasso,
  plugin_xgboost,
  modified_outcome,
  modified_covariates_lasso,
  modified_covariates_xgboost,
  augmented_modified_covariates_lasso,
  augmented_modified_covariates_xgboost,
  aipw_lasso,
  aipw_super_learner,
  causal_forest,
};

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::plugin_lasso: return "plugin_lasso";
    case Strategy::plugin_xgboost: return "plugin_xgboost";
    case Strategy::modified_outcome: return "modified_outcome";
    case Strategy::modified_covariates_lasso: return "modified_covariates_lasso";
    case Strategy::modified_covariates_xgboost: return "modified_covariates_xgboost";
    case Strategy::augmented_modified_covariates_lasso:
      return "augmented_modified_covariates_lasso";
    case Strategy::augmented_modified_covariates_xgboost:
      return "augmented_modified_covariates_xgboost";
    case Strategy::aipw_lasso: return "aipw_lasso";
    case Strategy::aipw_super_learner: return "aipw_super_learner";
    case Strategy::causal_forest: return "causal_forest";
  }
  return "?";
}

struct CateConfig {
  int cv_folds = 10;
  int grid_size = 100;
  BoostConfig boost;
  ForestConfig forest;  // causal forest and forest nuisances
  int sl_folds = 5;
  int sl_rf_trees = 100;
  int sl_gbt_rounds = 50;
  bool cross_fit = true;
  int cross_fit_folds = 5;
  bool stabilize_modified_outcome = true;
  std::uint64_t seed = 0;
};

struct CateModel {
  Strategy strategy = Strategy::plugin_lasso;
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> cate_fn;
  std::optional<std::vector<int>> builtin_tems;
  struct Diagnostics {
    bool positivity_warning = false;
    long clamped_rows = 0;
  } diagnostics;

  Eigen::VectorXd predict_cate(const Eigen::MatrixXd& w) const { return cate_fn(w); }
  double predict_cate_row(const Eigen::RowVectorXd& w) const { return cate_fn(w)[0]; }
};

struct ItrRule {
  CateModel model;

  Eigen::VectorXd assign(const Eigen::MatrixXd& w) const {
    const Eigen::VectorXd gamma = model.predict_cate(w);
    Eigen::VectorXd out(gamma.size());
    for (Eigen::Index i = 0; i < gamma.size(); ++i) out[i] = gamma[i] > 0.0 ? 1.0 : 0.0;
    return out;
  }
};

inline int assign_treatment(const ItrRule& rule, const Eigen::RowVectorXd& w) {
  return rule.model.predict_cate_row(w) > 0.0 ? 1 : 0;
}

inline std::optional<std::vector<int>> classify_tems(const CateModel& model) {
  return model.builtin_tems;
}

struct NuisanceEstimates {
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> mu0, mu1, pi;
  bool pi_known = false;
};

// Row-level nuisance evaluations (cross-fitted when estimated).
struct NuisanceValues {
  Eigen::VectorXd mu0, mu1, pi;
  bool pi_known = false;
};

namespace detail {

inline double clamp_pi(double pi) { return std::clamp(pi, kPiFloor, 1.0 - kPiFloor); }

inline void validate_dataset(const Dataset& data) {
  const Eigen::Index n = data.n();
  if (n < 2) throw std::invalid_argument("cate: need at least 2 observations");
  if (data.a.size() != n || data.y.size() != n)
    throw std::invalid_argument("cate: dataset shape mismatch");
  if (!data.w.allFinite() || !data.y.allFinite())
    throw std::invalid_argument("cate: non-finite dataset values");
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.a[i] != 0.0 && data.a[i] != 1.0)
      throw std::invalid_argument("cate: treatment must be 0/1");
}

inline void validate_pi(const Dataset& data, const Eigen::VectorXd& pi_hat) {
  if (pi_hat.size() != data.n()) throw std::invalid_argument("cate: pi_hat length mismatch");
  for (Eigen::Index i = 0; i < pi_hat.size(); ++i)
    if (!(pi_hat[i] > 0.0 && pi_hat[i] < 1.0))
      throw std::invalid_argument("cate: propensity outside (0,1)");
}

// Clamps pi into [kPiFloor, 1-kPiFloor] and flags heavy clamping.
inline Eigen::VectorXd clamp_pi_vector(const Eigen::VectorXd& pi, CateModel::Diagnostics& diag) {
  Eigen::VectorXd out = pi;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double c = clamp_pi(out[i]);
    if (c != out[i]) ++diag.clamped_rows;
    out[i] = c;
  }
  if (out.size() > 0 && diag.clamped_rows > 0.1 * static_cast<double>(out.size()))
    diag.positivity_warning = true;
  return out;
}

inline FittedLinearModel cv_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  Family family, const Eigen::VectorXd& weights,
                                  bool fit_intercept, const CateConfig& config,
                                  std::uint64_t seed,
                                  const Eigen::VectorXd& penalty_factors = {}) {
  RegressionProblem p;
  p.design = x;
  p.response = y;
  p.family = family;
  p.weights = weights;
  p.penalty_factors = penalty_factors;
  p.fit_intercept = fit_intercept;
  const int folds = std::min<int>(config.cv_folds, static_cast<int>(x.rows()));
  return fit_cv(p, folds, config.grid_size, seed);
}

inline std::vector<int> nonzero_indices(const Eigen::VectorXd& v) {
  std::vector<int> idx;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v[j] != 0.0) idx.push_back(static_cast<int>(j));
  return idx;
}

inline std::vector<int> crossfit_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "crossfit"));
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  std::vector<int> fold_of(n);
  for (Eigen::Index i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % folds);
  return fold_of;
}

}  // namespace detail

inline double aipw_transform(double a, double y, double mu0_w, double mu1_w, double pi_w) {
  const double pi = detail::clamp_pi(pi_w);
  const double denom = a * pi + (1.0 - a) * (1.0 - pi);
  const double mu_a = a == 1.0 ? mu1_w : mu0_w;
  return (2.0 * a - 1.0) / denom * (y - mu_a) + mu1_w - mu0_w;
}

inline double aipw_transform(const Eigen::RowVectorXd& w, double a, double y,
                             const NuisanceEstimates& nuisances) {
  const double mu0 = nuisances.mu0(w)[0];
  const double mu1 = nuisances.mu1(w)[0];
  const double pi = nuisances.pi(w)[0];
  return aipw_transform(a, y, mu0, mu1, pi);
}

enum class PluginLearner { lasso_interactions, xgboost_two_surface };

inline CateModel fit_plugin(const Dataset& data, PluginLearner learner,
                            const CateConfig& config = {}) {
  detail::validate_dataset(data);
  const Eigen::Index n = data.n(), p = data.p();
  CateModel model;

  if (learner == PluginLearner::lasso_interactions) {
    model.strategy = Strategy::plugin_lasso;
    Eigen::MatrixXd x(n, 1 + 2 * p);
    x.col(0) = data.a;
    x.middleCols(1, p) = data.w;
    x.middleCols(1 + p, p) = data.w.array().colwise() * data.a.array();
    // The treatment main effect is left unpenalized so shrinking it cannot
    // drag the CV-selected lambda down and pull in spurious interactions.
    Eigen::VectorXd factors = Eigen::VectorXd::Ones(1 + 2 * p);
    factors[0] = 0.0;
    const auto fit = detail::cv_lasso(x, data.y, Family::gaussian, {}, true, config,
                                      derive_seed(config.seed, "plugin_lasso"), factors);
    const double beta_a = fit.coefficients[0];
    const Eigen::VectorXd delta = fit.coefficients.segment(1 + p, p);
    model.builtin_tems = detail::nonzero_indices(delta);
    model.cate_fn = [beta_a, delta](const Eigen::MatrixXd& w) {
      return Eigen::VectorXd((w * delta).array() + beta_a);
    };
    return model;
  }

  model.strategy = Strategy::plugin_xgboost;
  std::vector<Eigen::Index> treated, control;
  for (Eigen::Index i = 0; i < n; ++i) (data.a[i] == 1.0 ? treated : control).push_back(i);
  if (treated.size() < 10 || control.size() < 10)
    throw std::runtime_error("fit_plugin: need at least 10 observations per arm");
  BoostConfig bc = config.boost;
  bc.seed = derive_seed(config.seed, "plugin_xgb_treated");
  const auto m1 = fit_gradient_boosting(data.w(treated, Eigen::all), data.y(treated), {}, bc,
                                        BoostLoss::squared);
  bc.seed = derive_seed(config.seed, "plugin_xgb_control");
  const auto m0 = fit_gradient_boosting(data.w(control, Eigen::all), data.y(control), {}, bc,
                                        BoostLoss::squared);
  model.cate_fn = [m0, m1](const Eigen::MatrixXd& w) {
    return Eigen::VectorXd(m1.predict(w) - m0.predict(w));
  };
  return model;
}

// Regresses the (optionally stabilized) transformed response on W. Under
// pi = 1/2 the stabilized response reduces exactly to 2(2A-1)Y.
inline CateModel fit_modified_outcome(const Dataset& data, const Eigen::VectorXd& pi_hat,
                                      const CateConfig& config = {}) {
  detail::validate_dataset(data);
  detail::validate_pi(data, pi_hat);
  CateModel model;
  model.strategy = Strategy::modified_outcome;
  const Eigen::VectorXd pi = detail::clamp_pi_vector(pi_hat, model.diagnostics);

  const Eigen::Index n = data.n();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = 2.0 * data.a[i] - 1.0;
    z[i] = 2.0 * sign * data.y[i];
    if (config.stabilize_modified_outcome) {
      const double denom = sign * pi[i] + 1.0 - data.a[i];
      z[i] *= 0.5 / denom;
    }
  }
  const auto fit = detail::cv_lasso(data.w, z, Family::gaussian, {}, true, config,
                                    derive_seed(config.seed, "modified_outcome"));
  model.builtin_tems = detail::nonzero_indices(fit.coefficients);
  model.cate_fn = [fit](const Eigen::MatrixXd& w) { return predict_linear(fit, w); };
  return model;
}

enum class ModCovLearner { lasso, xgboost };

inline CateModel fit_modified_covariates(const Dataset& data, Family family,
                                         ModCovLearner learner, const Eigen::VectorXd& pi_hat,
                                         const CateConfig& config = {}) {
  detail::validate_dataset(data);
  detail::validate_pi(data, pi_hat);
  CateModel model;
  model.strategy = learner == ModCovLearner::lasso ? Strategy::modified_covariates_lasso
                                                   : Strategy::modified_covariates_xgboost;
  const Eigen::VectorXd pi = detail::clamp_pi_vector(pi_hat, model.diagnostics);

  const Eigen::Index n = data.n();
  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double denom = (2.0 * data.a[i] - 1.0) * pi[i] + 1.0 - data.a[i];
    weights[i] = 1.0 / denom;
  }

  if (family == Family::binomial) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (data.y[i] != 0.0 && data.y[i] != 1.0)
        throw std::invalid_argument("fit_modified_covariates: binomial needs a 0/1 outcome");
    const Eigen::MatrixXd x = data.w.array().colwise() * (2.0 * data.a.array() - 1.0) / 2.0;
    const auto fit = detail::cv_lasso(x, data.y, Family::binomial, weights, false, config,
                                      derive_seed(config.seed, "mod_cov_bin"));
    const Eigen::VectorXd delta = fit.coefficients;
    model.builtin_tems = detail::nonzero_indices(delta);
    model.cate_fn = [delta](const Eigen::MatrixXd& w) {
      Eigen::VectorXd eta = w * delta;
      for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double e = std::exp(eta[i] / 2.0);
        eta[i] = (e - 1.0) / (e + 1.0);
      }
      return eta;
    };
    return model;
  }

  if (learner == ModCovLearner::lasso) {
    const Eigen::MatrixXd x = data.w.array().colwise() * (2.0 * data.a.array() - 1.0) / 2.0;
    const auto fit = detail::cv_lasso(x, data.y, Family::gaussian, weights, false, config,
                                      derive_seed(config.seed, "mod_cov_lasso"));
    const Eigen::VectorXd delta = fit.coefficients;
    model.builtin_tems = detail::nonzero_indices(delta);
    model.cate_fn = [delta](const Eigen::MatrixXd& w) { return Eigen::VectorXd(w * delta); };
    return model;
  }

  // (2A-1)^2 = 1, so the weighted loss over Gamma(W) equals weighted squared
  // error of the pseudo-response (2A-1)Y against Gamma(W).
  const Eigen::VectorXd pseudo = (2.0 * data.a.array() - 1.0) * data.y.array();
  BoostConfig bc = config.boost;
  bc.seed = derive_seed(config.seed, "mod_cov_xgb");
  const auto boosted = fit_gradient_boosting(data.w, pseudo, weights, bc, BoostLoss::squared);
  model.cate_fn = [boosted](const Eigen::MatrixXd& w) { return boosted.predict(w); };
  return model;
}

inline CateModel fit_augmented_modified_covariates(const Dataset& data, ModCovLearner learner,
                                                   const Eigen::VectorXd& pi_hat,
                                                   const CateConfig& config = {}) {
  detail::validate_dataset(data);
  detail::validate_pi(data, pi_hat);

  Eigen::VectorXd m_hat;
  if (learner == ModCovLearner::lasso) {
    const auto fit = detail::cv_lasso(data.w, data.y, Family::gaussian, {}, true, config,
                                      derive_seed(config.seed, "aug_main_lasso"));
    m_hat = predict_linear(fit, data.w);
  } else {
    BoostConfig bc = config.boost;
    bc.seed = derive_seed(config.seed, "aug_main_xgb");
    const auto boosted = fit_gradient_boosting(data.w, data.y, {}, bc, BoostLoss::squared);
    m_hat = boosted.predict(data.w);
  }

  Dataset residualized = data;
  residualized.y = data.y - m_hat;
  CateModel model = fit_modified_covariates(residualized, Family::gaussian, learner, pi_hat,
                                            config);
  model.strategy = learner == ModCovLearner::lasso
                       ? Strategy::augmented_modified_covariates_lasso
                       : Strategy::augmented_modified_covariates_xgboost;
  return model;
}

// Logistic CV-LASSO propensity, evaluated in sample. Used by the modified
// covariates family in observational mode.
inline Eigen::VectorXd fit_propensity_lasso(const Dataset& data, const CateConfig& config = {}) {
  detail::validate_dataset(data);
  const auto fit = detail::cv_lasso(data.w, data.a, Family::binomial, {}, true, config,
                                    derive_seed(config.seed, "propensity_lasso"));
  Eigen::VectorXd pi = predict_linear(fit, data.w);
  for (Eigen::Index i = 0; i < pi.size(); ++i) pi[i] = detail::clamp_pi(pi[i]);
  return pi;
}

// Cross-fitted Super Learner nuisances for the AIPW family. `known_pi` holds
// per-row propensities when the assignment mechanism is known.
inline NuisanceValues estimate_nuisances(const Dataset& data,
                                         const std::optional<Eigen::VectorXd>& known_pi,
                                         const CateConfig& config = {}) {
  detail::validate_dataset(data);
  const Eigen::Index n = data.n(), p = data.p();
  if (known_pi) detail::validate_pi(data, *known_pi);

  NuisanceValues out;
  out.mu0.resize(n);
  out.mu1.resize(n);
  out.pi.resize(n);
  out.pi_known = known_pi.has_value();

  Eigen::MatrixXd xa(n, p + 1);
  xa.leftCols(p) = data.w;
  xa.col(p) = data.a;
  const auto library = default_super_learner_library(config.sl_rf_trees, config.sl_gbt_rounds,
                                                     config.cv_folds, config.grid_size);

  const int folds = config.cross_fit ? config.cross_fit_folds : 1;
  std::vector<int> fold_of(n, 0);
  if (folds > 1) fold_of = detail::crossfit_folds(n, folds, config.seed);

  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    if (folds == 1) {
      train.resize(n);
      std::iota(train.begin(), train.end(), 0);
      test = train;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    }
    const auto sl_mu = fit_super_learner(library, xa(train, Eigen::all), data.y(train),
                                         Family::gaussian, config.sl_folds,
                                         derive_seed(config.seed, "nuisance_mu",
                                                     static_cast<std::uint64_t>(f)));
    Eigen::MatrixXd x_test(test.size(), p + 1);
    x_test.leftCols(p) = data.w(test, Eigen::all);
    x_test.col(p).setZero();
    const Eigen::VectorXd mu0 = predict_super_learner(sl_mu, x_test);
    x_test.col(p).setOnes();
    const Eigen::VectorXd mu1 = predict_super_learner(sl_mu, x_test);
    for (std::size_t t = 0; t < test.size(); ++t) {
      out.mu0[test[t]] = mu0[t];
      out.mu1[test[t]] = mu1[t];
    }
    if (!known_pi) {
      const auto sl_pi = fit_super_learner(library, data.w(train, Eigen::all), data.a(train),
                                           Family::binomial, config.sl_folds,
                                           derive_seed(config.seed, "nuisance_pi",
                                                       static_cast<std::uint64_t>(f)));
      const Eigen::VectorXd pi = predict_super_learner(sl_pi, data.w(test, Eigen::all));
      for (std::size_t t = 0; t < test.size(); ++t) out.pi[test[t]] = detail::clamp_pi(pi[t]);
    }
  }
  if (known_pi)
    for (Eigen::Index i = 0; i < n; ++i) out.pi[i] = detail::clamp_pi((*known_pi)[i]);
  return out;
}

enum class SecondStage { lasso, super_learner };

inline CateModel fit_aipw_cate(const Dataset& data, const NuisanceValues& nuisances,
                               SecondStage second_stage, const CateConfig& config = {}) {
  detail::validate_dataset(data);
  const Eigen::Index n = data.n();
  if (nuisances.mu0.size() != n || nuisances.mu1.size() != n || nuisances.pi.size() != n)
    throw std::invalid_argument("fit_aipw_cate: nuisance length mismatch");

  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i)
    t[i] = aipw_transform(data.a[i], data.y[i], nuisances.mu0[i], nuisances.mu1[i],
                          nuisances.pi[i]);

  CateModel model;
  if (second_stage == SecondStage::lasso) {
    model.strategy = Strategy::aipw_lasso;
    const auto fit = detail::cv_lasso(data.w, t, Family::gaussian, {}, true, config,
                                      derive_seed(config.seed, "aipw_lasso"));
    model.builtin_tems = detail::nonzero_indices(fit.coefficients);
    model.cate_fn = [fit](const Eigen::MatrixXd& w) { return predict_linear(fit, w); };
    return model;
  }
  model.strategy = Strategy::aipw_super_learner;
  const auto library = default_super_learner_library(config.sl_rf_trees, config.sl_gbt_rounds,
                                                     config.cv_folds, config.grid_size);
  const auto sl = fit_super_learner(library, data.w, t, Family::gaussian, config.sl_folds,
                                    derive_seed(config.seed, "aipw_sl"));
  model.cate_fn = [sl](const Eigen::MatrixXd& w) { return predict_super_learner(sl, w); };
  return model;
}

// Causal forest wrapper on Robinson residuals. `m_hat` estimates E[Y|W].
inline CateModel fit_causal_forest_cate(const Dataset& data, const Eigen::VectorXd& m_hat,
                                        const Eigen::VectorXd& pi_hat,
                                        const CateConfig& config = {}) {
  detail::validate_dataset(data);
  detail::validate_pi(data, pi_hat);
  if (m_hat.size() != data.n())
    throw std::invalid_argument("fit_causal_forest_cate: m_hat length mismatch");
  CateModel model;
  model.strategy = Strategy::causal_forest;
  const Eigen::VectorXd pi = detail::clamp_pi_vector(pi_hat, model.diagnostics);
  ForestConfig fc = config.forest;
  fc.honesty = true;
  fc.seed = derive_seed(config.seed, "causal_forest");
  const auto forest = fit_causal_forest(data.w, data.y, data.a, m_hat, pi, fc);
  model.cate_fn = [forest](const Eigen::MatrixXd& w) { return forest.predict_cate(w); };
  return model;
}

// Random forest nuisances for the causal forest: m(W) = E[Y|W] and, when the
// assignment mechanism is unknown, pi(W) regressed on W. Cross-fitted so the
// Robinson residuals are not attenuated by in-sample overfitting.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_forest_nuisances(
    const Dataset& data, const std::optional<Eigen::VectorXd>& known_pi,
    const CateConfig& config = {}) {
  detail::validate_dataset(data);
  const Eigen::Index n = data.n();
  Eigen::VectorXd m_hat(n), pi_hat(n);
  if (known_pi) {
    detail::validate_pi(data, *known_pi);
    pi_hat = *known_pi;
  }

  const int folds = config.cross_fit ? config.cross_fit_folds : 1;
  std::vector<int> fold_of(n, 0);
  if (folds > 1) fold_of = detail::crossfit_folds(n, folds, derive_seed(config.seed, "cf_nuis"));
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    if (folds == 1) {
      train.resize(n);
      std::iota(train.begin(), train.end(), 0);
      test = train;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    }
    ForestConfig fc = config.forest;
    fc.honesty = false;
    fc.seed = derive_seed(config.seed, "cf_nuisance_m", static_cast<std::uint64_t>(f));
    const auto rf_m = fit_random_forest(data.w(train, Eigen::all), data.y(train), {}, fc);
    const Eigen::VectorXd m = rf_m.predict(data.w(test, Eigen::all));
    for (std::size_t t = 0; t < test.size(); ++t) m_hat[test[t]] = m[t];
    if (!known_pi) {
      fc.seed = derive_seed(config.seed, "cf_nuisance_pi", static_cast<std::uint64_t>(f));
      const auto rf_pi = fit_random_forest(data.w(train, Eigen::all), data.a(train), {}, fc);
      const Eigen::VectorXd pi = rf_pi.predict(data.w(test, Eigen::all));
      for (std::size_t t = 0; t < test.size(); ++t) pi_hat[test[t]] = pi[t];
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) pi_hat[i] = detail::clamp_pi(pi_hat[i]);
  return {std::move(m_hat), std::move(pi_hat)};
}

}  // namespace itr
