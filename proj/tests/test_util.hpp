#pragma once

// Shared helpers for the unit and acceptance suites.

#include <Eigen/Dense>

#include "itr/elastic_net.hpp"
#include "itr/rng.hpp"

namespace itr::testutil {

// Maximum KKT violation of an elastic-net fit, evaluated on the same
// standardized scale the solver works on. Zero for an exact stationary
// point.
inline double kkt_max_violation(const RegressionProblem& problem, const FittedLinearModel& fit) {
  const Eigen::Index n = problem.design.rows();
  const Eigen::Index d = problem.design.cols();
  const Eigen::VectorXd w =
      problem.weights.size() ? problem.weights : Eigen::VectorXd::Ones(n);
  // Rebuild the standardized design and residual.
  Eigen::MatrixXd x = problem.design;
  Eigen::VectorXd beta_std(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    x.col(j).array() -= fit.column_means[j];
    x.col(j) /= fit.column_scales[j];
    beta_std[j] = fit.coefficients[j] * fit.column_scales[j];
  }
  Eigen::VectorXd pred = (problem.design * fit.coefficients).array() + fit.intercept;
  Eigen::VectorXd r = problem.response - pred;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double f = problem.penalty_factors.size() ? problem.penalty_factors[j] : 1.0;
    const double l1 = fit.lambda * problem.penalty_mix * f;
    const double l2 = fit.lambda * (1.0 - problem.penalty_mix) * f;
    const double g = (x.col(j).array() * w.array() * r.array()).sum() / static_cast<double>(n) -
                     l2 * beta_std[j];
    double viol;
    if (beta_std[j] == 0.0) {
      viol = std::max(0.0, std::abs(g) - l1);
    } else {
      viol = std::abs(g - l1 * (beta_std[j] > 0 ? 1.0 : -1.0));
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  return x;
}

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace itr::testutil
