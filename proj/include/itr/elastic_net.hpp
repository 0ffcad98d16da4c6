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

enum class Family { gaussian, binomial };

// Elastic-net regression problem. `penalty_mix` is the usual alpha:
// 1 = lasso, 0 = ridge. Weights default to all ones when empty.
// `penalty_factors` multiply the penalty per coefficient (0 = unpenalized);
// empty means all ones.
struct RegressionProblem {
  Eigen::MatrixXd design;    // n x d
  Eigen::VectorXd response;  // n
  Family family = Family::gaussian;
  Eigen::VectorXd weights;   // empty => all ones
  Eigen::VectorXd penalty_factors;
  double penalty_mix = 1.0;
  bool fit_intercept = true;
  bool standardize = true;
};

// Coefficients are stored on the original covariate scale.
struct FittedLinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  Family family = Family::gaussian;
  Eigen::VectorXd column_means;
  Eigen::VectorXd column_scales;
};

struct CvResult {
  Eigen::VectorXd lambda_grid;  // decreasing
  Eigen::VectorXd cv_risk;      // mean held-out loss per lambda
  double selected_lambda = 0.0;
  std::vector<int> fold_assignment;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, FittedLinearModel last)
      : std::runtime_error(what), last_iterate(std::move(last)) {}
  FittedLinearModel last_iterate;
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

namespace detail {

constexpr double kCdTol = 1e-7;
constexpr int kMaxSweeps = 10000;
constexpr double kProbClamp = 1e-5;
constexpr double kAlphaFloor = 1e-3;

inline void validate_problem(const RegressionProblem& p) {
  const auto n = p.design.rows();
  const auto d = p.design.cols();
  if (n < 2) throw std::invalid_argument("elastic net: need at least 2 observations");
  if (d < 1) throw std::invalid_argument("elastic net: need at least 1 covariate");
  if (p.response.size() != n) throw std::invalid_argument("elastic net: response length mismatch");
  if (!p.design.allFinite() || !p.response.allFinite())
    throw std::invalid_argument("elastic net: non-finite input");
  if (p.penalty_mix < 0.0 || p.penalty_mix > 1.0)
    throw std::invalid_argument("elastic net: penalty_mix outside [0,1]");
  if (p.weights.size() != 0) {
    if (p.weights.size() != n) throw std::invalid_argument("elastic net: weight length mismatch");
    if (p.weights.minCoeff() < 0.0 || !(p.weights.sum() > 0.0))
      throw std::invalid_argument("elastic net: weights must be nonnegative with positive sum");
  }
  if (p.penalty_factors.size() != 0) {
    if (p.penalty_factors.size() != d)
      throw std::invalid_argument("elastic net: penalty factor length mismatch");
    if (!p.penalty_factors.allFinite() || p.penalty_factors.minCoeff() < 0.0)
      throw std::invalid_argument("elastic net: penalty factors must be finite and nonnegative");
  }
  if (p.family == Family::binomial) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = p.response[i];
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("elastic net: binomial response must be 0/1");
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Standardized working copy of a problem. All coordinate-descent math runs
// on this scale; results are mapped back in finalize().
struct Workspace {
  Eigen::MatrixXd x;       // standardized design
  Eigen::VectorXd y;       // response (centered for gaussian+intercept)
  Eigen::VectorXd w;       // observation weights
  Eigen::VectorXd means;    // column means used
  Eigen::VectorXd scales;   // column scales used
  Eigen::VectorXd factors;  // per-coefficient penalty multipliers
  double y_center = 0.0;
  double w_sum = 0.0;
  Family family;
  bool fit_intercept;
  double alpha;
  Eigen::Index n, d;

  explicit Workspace(const RegressionProblem& p)
      : x(p.design),
        y(p.response),
        family(p.family),
        fit_intercept(p.fit_intercept),
        alpha(p.penalty_mix),
        n(p.design.rows()),
        d(p.design.cols()) {
    w = p.weights.size() ? p.weights : Eigen::VectorXd::Ones(n);
    w_sum = w.sum();
    factors = p.penalty_factors.size() ? p.penalty_factors : Eigen::VectorXd::Ones(d);
    means = Eigen::VectorXd::Zero(d);
    scales = Eigen::VectorXd::Ones(d);
    // Columns are centered only when an intercept is fit; centering a
    // no-intercept design would smuggle one in.
    const bool center = p.fit_intercept;
    if (center) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double m = x.col(j).dot(w) / w_sum;
        means[j] = m;
        x.col(j).array() -= m;
      }
    }
    if (p.standardize) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = (x.col(j).array().square() * w.array()).sum() / static_cast<double>(n);
        const double s = std::sqrt(v);
        if (s > 0.0) {
          scales[j] = s;
          x.col(j) /= s;
        }
      }
    }
    if (family == Family::gaussian && fit_intercept) {
      y_center = y.dot(w) / w_sum;
      y.array() -= y_center;
    }
  }

  double lambda_max() const {
    Eigen::VectorXd r = y;
    if (family == Family::binomial) {
      // Gradient of the log-likelihood at the intercept-only (or null) fit.
      const double p_null = fit_intercept ? y.dot(w) / w_sum : 0.5;
      r = y.array() - p_null;
    }
    double m = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (factors[j] <= 0.0) continue;
      m = std::max(m, std::abs((x.col(j).array() * w.array() * r.array()).sum()) /
                          (static_cast<double>(n) * factors[j]));
    }
    return m / std::max(alpha, kAlphaFloor);
  }

  FittedLinearModel finalize(const Eigen::VectorXd& beta_std, double intercept_std,
                             double lambda) const {
    FittedLinearModel m;
    m.family = family;
    m.lambda = lambda;
    m.column_means = means;
    m.column_scales = scales;
    m.coefficients = (beta_std.array() / scales.array()).matrix();
    double b0 = intercept_std;
    if (family == Family::gaussian && fit_intercept) b0 += y_center;
    m.intercept = b0 - m.coefficients.dot(means);
    return m;
  }
};

// Weighted gaussian coordinate descent on standardized data. `beta` and
// `intercept` are warm-start inputs and outputs; `r` must equal
// y - intercept - X beta on entry and is kept in sync.
//
// Uses the usual full-sweep / active-set iteration: after a full pass,
// cycle on the active set until stable, then confirm with a full pass.
inline bool cd_gaussian(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, double lambda,
                        double alpha, bool update_intercept, double w_sum, Eigen::VectorXd& r,
                        Eigen::VectorXd& beta, double& intercept, int& sweeps_used,
                        const Eigen::VectorXd* col_sq_norms = nullptr,
                        const Eigen::VectorXd* factors = nullptr) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::VectorXd wr = w.array() * r.array();
  auto update_coord = [&](Eigen::Index j) -> double {
    const double sq = col_sq_norms ? (*col_sq_norms)[j]
                                   : (x.col(j).array().square() * w.array()).sum() * inv_n;
    if (sq <= 0.0) return 0.0;
    const double f = factors ? (*factors)[j] : 1.0;
    const double l1 = lambda * alpha * f;
    const double l2 = lambda * (1.0 - alpha) * f;
    const double old = beta[j];
    const double z = x.col(j).dot(wr) * inv_n + sq * old;
    const double neu = soft_threshold(z, l1) / (sq + l2);
    const double delta = neu - old;
    if (delta != 0.0) {
      beta[j] = neu;
      r -= delta * x.col(j);
      wr = w.array() * r.array();
    }
    return std::abs(delta);
  };
  auto update_b0 = [&]() -> double {
    if (!update_intercept) return 0.0;
    const double delta = wr.sum() / w_sum;
    if (delta != 0.0) {
      intercept += delta;
      r.array() -= delta;
      wr = w.array() * r.array();
    }
    return std::abs(delta);
  };

  std::vector<Eigen::Index> active;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    ++sweeps_used;
    double max_delta = update_b0();
    active.clear();
    for (Eigen::Index j = 0; j < d; ++j) {
      max_delta = std::max(max_delta, update_coord(j));
      if (beta[j] != 0.0) active.push_back(j);
    }
    if (max_delta < kCdTol) return true;
    // Active-set cycling.
    for (; sweep < kMaxSweeps; ++sweep) {
      ++sweeps_used;
      double am = update_b0();
      for (Eigen::Index j : active) am = std::max(am, update_coord(j));
      if (am < kCdTol) break;
    }
  }
  return false;
}

struct SolveState {
  Eigen::VectorXd beta;
  double intercept = 0.0;
};

// Single-lambda solve on a prepared workspace, warm-started from `state`.
inline void solve_at(Workspace& ws, double lambda, SolveState& state) {
  int sweeps = 0;
  if (ws.family == Family::gaussian) {
    Eigen::VectorXd col_sq(ws.d);
    const double inv_n = 1.0 / static_cast<double>(ws.n);
    for (Eigen::Index j = 0; j < ws.d; ++j)
      col_sq[j] = (ws.x.col(j).array().square() * ws.w.array()).sum() * inv_n;
    Eigen::VectorXd r = ws.y - ws.x * state.beta;
    double b0 = 0.0;  // gaussian intercept handled via centering
    const bool ok = cd_gaussian(ws.x, ws.w, lambda, ws.alpha, /*update_intercept=*/false,
                                ws.w_sum, r, state.beta, b0, sweeps, &col_sq, &ws.factors);
    if (!ok)
      throw ConvergenceError("elastic net: gaussian coordinate descent did not converge",
                             ws.finalize(state.beta, 0.0, lambda));
    return;
  }

  // Binomial: penalized IRLS with an inner weighted gaussian CD loop.
  Eigen::VectorXd& beta = state.beta;
  double& b0 = state.intercept;
  int total_sweeps = 0;
  for (int outer = 0; outer < 100; ++outer) {
    Eigen::VectorXd eta = (ws.x * beta).array() + b0;
    Eigen::VectorXd prob(ws.n), v(ws.n), z(ws.n);
    for (Eigen::Index i = 0; i < ws.n; ++i) {
      double p = sigmoid(eta[i]);
      p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      prob[i] = p;
      const double q = p * (1.0 - p);
      v[i] = ws.w[i] * q;
      z[i] = eta[i] + (ws.y[i] - p) / q;
    }
    const double v_sum = v.sum();
    Eigen::VectorXd r = z - eta;
    Eigen::VectorXd old_beta = beta;
    const double old_b0 = b0;
    const bool ok = cd_gaussian(ws.x, v, lambda, ws.alpha, ws.fit_intercept, v_sum, r, beta, b0,
                                total_sweeps, nullptr, &ws.factors);
    if (!ok || total_sweeps > kMaxSweeps)
      throw ConvergenceError("elastic net: binomial IRLS did not converge",
                             ws.finalize(beta, b0, lambda));
    const double change =
        std::max((beta - old_beta).cwiseAbs().maxCoeff(), std::abs(b0 - old_b0));
    if (change < 10 * kCdTol) return;
  }
  throw ConvergenceError("elastic net: binomial IRLS did not converge",
                         ws.finalize(beta, b0, lambda));
}

// Warm-started path fit that truncates on a sweep-budget exhaustion instead
// of failing: the carried iterate (a near-solution) is kept for the stalled
// point and the deeper tail is dropped. The budget only binds deep in the
// overparameterized tail of the grid, where the lasso approaches an
// interpolating fit; a strict failure there would abort a whole CV scan over
// points the selection rule never favors.
inline std::vector<FittedLinearModel> fit_path_best_effort(const RegressionProblem& problem,
                                                           const Eigen::VectorXd& grid) {
  Workspace ws(problem);
  SolveState state{Eigen::VectorXd::Zero(ws.d), 0.0};
  std::vector<FittedLinearModel> path;
  path.reserve(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    try {
      solve_at(ws, grid[k], state);
      path.push_back(ws.finalize(state.beta, state.intercept, grid[k]));
    } catch (const ConvergenceError& e) {
      path.push_back(e.last_iterate);
      break;
    }
  }
  return path;
}

inline Eigen::VectorXd lambda_grid_for(const Workspace& ws, int grid_size) {
  const double lmax = std::max(ws.lambda_max(), 1e-12);
  const double ratio = ws.family == Family::gaussian ? 1e-3 : 1e-2;
  Eigen::VectorXd grid(grid_size);
  const double step = std::log(ratio) / static_cast<double>(grid_size - 1);
  for (int k = 0; k < grid_size; ++k) grid[k] = lmax * std::exp(step * k);
  return grid;
}

}  // namespace detail

inline FittedLinearModel fit_elastic_net(const RegressionProblem& problem, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("elastic net: lambda must be >= 0");
  detail::validate_problem(problem);
  detail::Workspace ws(problem);
  detail::SolveState state{Eigen::VectorXd::Zero(ws.d), 0.0};
  detail::solve_at(ws, lambda, state);
  return ws.finalize(state.beta, state.intercept, lambda);
}

// Warm-started path fit along a decreasing lambda grid.
inline std::vector<FittedLinearModel> fit_elastic_net_path(const RegressionProblem& problem,
                                                           const Eigen::VectorXd& grid) {
  detail::validate_problem(problem);
  detail::Workspace ws(problem);
  detail::SolveState state{Eigen::VectorXd::Zero(ws.d), 0.0};
  std::vector<FittedLinearModel> path;
  path.reserve(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    detail::solve_at(ws, grid[k], state);
    path.push_back(ws.finalize(state.beta, state.intercept, grid[k]));
  }
  return path;
}

inline Eigen::VectorXd predict_linear(const FittedLinearModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.coefficients.size())
    throw std::invalid_argument("predict_linear: column count mismatch");
  Eigen::VectorXd eta = (X * model.coefficients).array() + model.intercept;
  if (model.family == Family::binomial)
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = detail::sigmoid(eta[i]);
  return eta;
}

inline CvResult cv_select_lambda(const RegressionProblem& problem, int folds, int grid_size,
                                 std::uint64_t seed) {
  detail::validate_problem(problem);
  if (folds < 2) throw std::invalid_argument("cv_select_lambda: need at least 2 folds");
  if (grid_size < 2) throw std::invalid_argument("cv_select_lambda: grid length must be >= 2");
  const Eigen::Index n = problem.design.rows();
  if (n < folds) throw std::invalid_argument("cv_select_lambda: n < folds");

  detail::Workspace full_ws(problem);
  const Eigen::VectorXd grid = detail::lambda_grid_for(full_ws, grid_size);

  // Seed-deterministic fold partition.
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  std::vector<int> fold_of(n);
  for (Eigen::Index i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % folds);

  const Eigen::VectorXd w_all =
      problem.weights.size() ? problem.weights : Eigen::VectorXd::Ones(n);
  Eigen::VectorXd loss_sum = Eigen::VectorXd::Zero(grid_size);
  const double w_total = w_all.sum();
  int usable = grid_size;  // grid prefix every fold's path reached

  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    RegressionProblem sub = problem;
    sub.design = problem.design(train, Eigen::all);
    sub.response = problem.response(train);
    if (problem.weights.size()) sub.weights = problem.weights(train);
    const auto path = detail::fit_path_best_effort(sub, grid);
    usable = std::min(usable, static_cast<int>(path.size()));
    const Eigen::MatrixXd x_test = problem.design(test, Eigen::all);
    for (int k = 0; k < static_cast<int>(path.size()); ++k) {
      const Eigen::VectorXd pred = predict_linear(path[k], x_test);
      for (std::size_t t = 0; t < test.size(); ++t) {
        const Eigen::Index i = test[t];
        const double wi = w_all[i];
        if (problem.family == Family::gaussian) {
          const double e = problem.response[i] - pred[t];
          loss_sum[k] += wi * e * e;
        } else {
          const double p =
              std::clamp(pred[t], detail::kProbClamp, 1.0 - detail::kProbClamp);
          loss_sum[k] -= wi * (problem.response[i] * std::log(p) +
                               (1.0 - problem.response[i]) * std::log(1.0 - p));
        }
      }
    }
  }

  CvResult cv;
  cv.lambda_grid = grid;
  cv.cv_risk = loss_sum / w_total;
  // Lambdas past a fold's truncation point have no complete risk estimate
  // and are ineligible.
  for (int k = usable; k < grid_size; ++k)
    cv.cv_risk[k] = std::numeric_limits<double>::quiet_NaN();
  cv.fold_assignment = std::move(fold_of);
  // Ties broken toward the smallest lambda (largest grid index).
  int best = 0;
  for (int k = 1; k < usable; ++k)
    if (cv.cv_risk[k] <= cv.cv_risk[best]) best = k;
  cv.selected_lambda = grid[best];
  return cv;
}

// CV-select lambda, then refit on the full data at the selected value.
inline FittedLinearModel fit_cv(const RegressionProblem& problem, int folds, int grid_size,
                                std::uint64_t seed) {
  const CvResult cv = cv_select_lambda(problem, folds, grid_size, seed);
  detail::Workspace ws(problem);
  detail::SolveState state{Eigen::VectorXd::Zero(ws.d), 0.0};
  // Warm along the grid down to the selected lambda for stability and speed;
  // best-effort past a tail stall, like the CV scan itself.
  FittedLinearModel out;
  for (Eigen::Index k = 0; k < cv.lambda_grid.size(); ++k) {
    try {
      detail::solve_at(ws, cv.lambda_grid[k], state);
      out = ws.finalize(state.beta, state.intercept, cv.lambda_grid[k]);
    } catch (const ConvergenceError& e) {
      out = e.last_iterate;
    }
    if (cv.lambda_grid[k] == cv.selected_lambda) break;
  }
  return out;
}

}  // namespace itr
