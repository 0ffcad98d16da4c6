#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "itr/elastic_net.hpp"
#include "itr/rng.hpp"
#include "itr/trees.hpp"

namespace itr {

enum class LearnerKind { lasso, ridge, elastic_net, random_forest, gradient_boosting };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::lasso;
  Family family = Family::gaussian;
  int cv_folds = 10;
  int grid_size = 100;
  ForestConfig forest{.n_trees = 100};
  BoostConfig boost{.n_rounds = 50};

  std::string name() const {
    switch (kind) {
      case LearnerKind::lasso: return "lasso";
      case LearnerKind::ridge: return "ridge";
      case LearnerKind::elastic_net: return "elastic_net";
      case LearnerKind::random_forest: return "random_forest";
      case LearnerKind::gradient_boosting: return "gradient_boosting";
    }
    return "?";
  }
};

using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct SuperLearnerModel {
  std::vector<LearnerSpec> library;    // surviving learners, in library order
  std::vector<Predictor> fitted;       // refit on the full data
  Eigen::VectorXd weights;             // simplex vector over `library`
  int folds = 0;
  Eigen::VectorXd learner_cv_risk;     // per surviving learner
  double combination_cv_risk = 0.0;
  Family family = Family::gaussian;
  std::vector<std::string> warnings;
};

namespace detail {

inline Predictor fit_base_learner(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y, std::uint64_t seed) {
  switch (spec.kind) {
    case LearnerKind::lasso:
    case LearnerKind::ridge:
    case LearnerKind::elastic_net: {
      RegressionProblem p;
      p.design = x;
      p.response = y;
      p.family = spec.family;
      p.penalty_mix = spec.kind == LearnerKind::lasso   ? 1.0
                      : spec.kind == LearnerKind::ridge ? 0.0
                                                        : 0.5;
      FittedLinearModel m = fit_cv(p, spec.cv_folds, spec.grid_size, seed);
      return [m](const Eigen::MatrixXd& xt) { return predict_linear(m, xt); };
    }
    case LearnerKind::random_forest: {
      ForestConfig cfg = spec.forest;
      cfg.seed = seed;
      RandomForestModel m = fit_random_forest(x, y, {}, cfg);
      return [m](const Eigen::MatrixXd& xt) { return m.predict(xt); };
    }
    case LearnerKind::gradient_boosting: {
      BoostConfig cfg = spec.boost;
      cfg.seed = seed;
      const BoostLoss loss =
          spec.family == Family::binomial ? BoostLoss::logistic : BoostLoss::squared;
      GradientBoostingModel m = fit_gradient_boosting(x, y, {}, cfg, loss);
      return [m](const Eigen::MatrixXd& xt) { return m.predict(xt); };
    }
  }
  throw std::logic_error("unknown learner kind");
}

inline double meta_risk(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Family family,
                        const Eigen::VectorXd& w) {
  const Eigen::VectorXd pred = z * w;
  const Eigen::Index n = y.size();
  double risk = 0.0;
  if (family == Family::gaussian) {
    risk = (y - pred).squaredNorm() / static_cast<double>(n);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
      risk -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    risk /= static_cast<double>(n);
  }
  return risk;
}

inline Eigen::VectorXd meta_risk_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                          Family family, const Eigen::VectorXd& w) {
  const Eigen::Index n = y.size();
  const Eigen::VectorXd pred = z * w;
  if (family == Family::gaussian)
    return 2.0 * z.transpose() * (pred - y) / static_cast<double>(n);
  Eigen::VectorXd resid(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
    resid[i] = (p - y[i]) / (p * (1.0 - p));
  }
  return z.transpose() * resid / static_cast<double>(n);
}

// Minimize the CV risk over the probability simplex by monotone
// exponentiated-gradient descent, started from the best single learner so
// the oracle-dominance invariant holds by construction.
inline Eigen::VectorXd solve_simplex_weights(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                             Family family, double* final_risk) {
  const Eigen::Index L = z.cols();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(L);
  double best_risk = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < L; ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(L);
    e[k] = 1.0;
    const double r = meta_risk(z, y, family, e);
    if (r < best_risk) {
      best_risk = r;
      best = e;
    }
  }

  Eigen::VectorXd w = Eigen::VectorXd::Constant(L, 1.0 / static_cast<double>(L));
  double risk = meta_risk(z, y, family, w);
  if (best_risk < risk) {
    w = best;
    risk = best_risk;
  }

  double step = 1.0;
  constexpr double tol = 1e-8;
  for (int it = 0; it < 10000; ++it) {
    const Eigen::VectorXd grad = meta_risk_gradient(z, y, family, w);
    bool improved = false;
    for (int back = 0; back < 40; ++back) {
      Eigen::VectorXd cand = (w.array().max(1e-300).log() - step * grad.array()).exp();
      cand /= cand.sum();
      const double cand_risk = meta_risk(z, y, family, cand);
      if (cand_risk < risk - tol) {
        w = cand;
        risk = cand_risk;
        improved = true;
        step *= 1.2;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  // Exact renormalization of small weights.
  for (Eigen::Index k = 0; k < L; ++k)
    if (w[k] < 1e-10) w[k] = 0.0;
  w /= w.sum();
  risk = meta_risk(z, y, family, w);
  if (best_risk < risk) {
    w = best;
    risk = best_risk;
  }
  if (final_risk) *final_risk = risk;
  return w;
}

}  // namespace detail

inline SuperLearnerModel fit_super_learner(const std::vector<LearnerSpec>& library,
                                           const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           Family family, int folds, std::uint64_t seed) {
  if (library.empty()) throw std::invalid_argument("fit_super_learner: empty library");
  if (folds < 2) throw std::invalid_argument("fit_super_learner: need at least 2 folds");
  const Eigen::Index n = x.rows();
  if (y.size() != n) throw std::invalid_argument("fit_super_learner: shape mismatch");
  if (n < folds) throw std::invalid_argument("fit_super_learner: n < folds");
  const std::size_t L = library.size();

  // Seed-deterministic fold split.
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "sl_folds"));
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  std::vector<int> fold_of(n);
  for (Eigen::Index i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % folds);

  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(L));
  std::vector<int> fail_count(L, 0);
  std::vector<std::string> warnings;

  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    const Eigen::MatrixXd x_train = x(train, Eigen::all);
    const Eigen::VectorXd y_train = y(train);
    const Eigen::MatrixXd x_test = x(test, Eigen::all);
    const double fallback = y_train.mean();
    for (std::size_t l = 0; l < L; ++l) {
      LearnerSpec spec = library[l];
      spec.family = family;
      Eigen::VectorXd pred;
      try {
        const auto fitted = detail::fit_base_learner(
            spec, x_train, y_train, derive_seed(seed, "sl_fit", l, static_cast<std::uint64_t>(f)));
        pred = fitted(x_test);
      } catch (const std::exception& e) {
        ++fail_count[l];
        warnings.push_back(spec.name() + " failed on fold " + std::to_string(f) + ": " + e.what());
        pred = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(test.size()), fallback);
      }
      for (std::size_t t = 0; t < test.size(); ++t) z(test[t], static_cast<Eigen::Index>(l)) = pred[t];
    }
  }

  // Drop learners that failed on every fold.
  std::vector<std::size_t> keep;
  for (std::size_t l = 0; l < L; ++l) {
    if (fail_count[l] >= folds) {
      warnings.push_back(library[l].name() + " dropped: failed on all folds");
    } else {
      keep.push_back(l);
    }
  }
  if (keep.empty()) throw std::runtime_error("fit_super_learner: all base learners failed");

  Eigen::MatrixXd zk(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) zk.col(static_cast<Eigen::Index>(k)) = z.col(static_cast<Eigen::Index>(keep[k]));

  SuperLearnerModel model;
  model.family = family;
  model.folds = folds;
  model.warnings = std::move(warnings);
  model.learner_cv_risk.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(keep.size()));
    e[static_cast<Eigen::Index>(k)] = 1.0;
    model.learner_cv_risk[static_cast<Eigen::Index>(k)] = detail::meta_risk(zk, y, family, e);
  }
  model.weights = detail::solve_simplex_weights(zk, y, family, &model.combination_cv_risk);

  for (std::size_t k = 0; k < keep.size(); ++k) {
    LearnerSpec spec = library[keep[k]];
    spec.family = family;
    model.library.push_back(spec);
    model.fitted.push_back(detail::fit_base_learner(
        spec, x, y, derive_seed(seed, "sl_refit", keep[k])));
  }
  return model;
}

inline Eigen::VectorXd predict_super_learner(const SuperLearnerModel& model,
                                             const Eigen::MatrixXd& x) {
  if (model.fitted.empty()) throw std::invalid_argument("predict_super_learner: empty model");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (std::size_t l = 0; l < model.fitted.size(); ++l) {
    if (model.weights[static_cast<Eigen::Index>(l)] == 0.0) continue;
    out += model.weights[static_cast<Eigen::Index>(l)] * model.fitted[l](x);
  }
  if (model.family == Family::binomial)
    out = out.array().min(1.0 - detail::kProbClamp).max(detail::kProbClamp);
  return out;
}

// Default library: lasso, ridge, elastic net, random forest, gradient
// boosting. Ensemble sizes are kept modest so nuisance fits stay desk-scale.
inline std::vector<LearnerSpec> default_super_learner_library(int rf_trees = 100,
                                                              int gbt_rounds = 50,
                                                              int cv_folds = 10,
                                                              int grid_size = 100) {
  std::vector<LearnerSpec> lib(5);
  lib[0].kind = LearnerKind::lasso;
  lib[1].kind = LearnerKind::ridge;
  lib[2].kind = LearnerKind::elastic_net;
  for (auto& spec : lib) {
    spec.cv_folds = cv_folds;
    spec.grid_size = grid_size;
  }
  lib[3].kind = LearnerKind::random_forest;
  lib[3].forest.n_trees = rf_trees;
  lib[4].kind = LearnerKind::gradient_boosting;
  lib[4].boost.n_rounds = gbt_rounds;
  return lib;
}

}  // namespace itr
