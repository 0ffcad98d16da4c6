#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "itr/dataset.hpp"
#include "itr/rng.hpp"

namespace itr {

enum class CovarianceKind { identity, block };
enum class PropensityKind { pi1_constant_half, pi2_logistic };
enum class OutcomeKind { mu1, mu2, mu3, mu4 };

struct DgpSpec {
  int p = 500;
  CovarianceKind covariance_kind = CovarianceKind::identity;
  PropensityKind propensity_kind = PropensityKind::pi2_logistic;
  OutcomeKind outcome_kind = OutcomeKind::mu1;
  Eigen::VectorXd gamma;
  Eigen::VectorXd delta;
  double noise_sd = 1.0;
  std::uint64_t block_seed = 0;

  bool linear_outcome() const {
    return outcome_kind == OutcomeKind::mu1 || outcome_kind == OutcomeKind::mu2;
  }
  bool sparse_tems() const {
    return outcome_kind == OutcomeKind::mu1 || outcome_kind == OutcomeKind::mu3;
  }
  // Treatment assignment is known exactly in the pi2 regime; pi1 DGPs are
  // analyzed as observational studies.
  bool rct() const { return propensity_kind == PropensityKind::pi2_logistic; }

  std::vector<int> true_tem_indices() const {
    std::vector<int> idx;
    for (int j = 0; j < delta.size(); ++j)
      if (delta[j] != 0.0) idx.push_back(j);
    return idx;
  }
};

struct CovarianceModel {
  CovarianceKind kind = CovarianceKind::identity;
  int p = 0;
  int block_size = 0;
  std::vector<Eigen::MatrixXd> blocks;      // unit-diagonal correlation blocks
  std::vector<Eigen::MatrixXd> block_chol;  // lower Cholesky factors

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(p, p);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const int off = static_cast<int>(b) * block_size;
      sigma.block(off, off, block_size, block_size) = blocks[b];
    }
    return sigma;
  }

  // Maps iid standard normals z to a draw from N(0, Sigma).
  void apply_cholesky(Eigen::Ref<Eigen::VectorXd> z) const {
    if (kind == CovarianceKind::identity) return;
    for (std::size_t b = 0; b < block_chol.size(); ++b) {
      const int off = static_cast<int>(b) * block_size;
      z.segment(off, block_size) =
          (block_chol[b] * z.segment(off, block_size)).eval();
    }
  }
};

inline CovarianceModel make_covariance(CovarianceKind kind, int p, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("make_covariance: p must be positive");
  CovarianceModel model;
  model.kind = kind;
  model.p = p;
  if (kind == CovarianceKind::identity) return model;
  if (p % 50 != 0)
    throw std::invalid_argument("make_covariance: block kind requires p divisible by 50");
  const int k = p / 50;
  model.block_size = k;
  for (int b = 0; b < 50; ++b) {
    Rng rng(derive_seed(seed, "cov_block", static_cast<std::uint64_t>(b)));
    Eigen::MatrixXd g(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) g(i, j) = rng.normal();
    Eigen::MatrixXd inner =
        g.transpose() * g / static_cast<double>(k) + 0.1 * Eigen::MatrixXd::Identity(k, k);
    const Eigen::VectorXd dinv = inner.diagonal().array().rsqrt();
    Eigen::MatrixXd block = dinv.asDiagonal() * inner * dinv.asDiagonal();
    block = 0.5 * (block + block.transpose());
    model.blocks.push_back(block);
    model.block_chol.push_back(Eigen::LLT<Eigen::MatrixXd>(block).matrixL());
  }
  return model;
}

inline double propensity(PropensityKind kind, const Eigen::RowVectorXd& w) {
  if (kind == PropensityKind::pi1_constant_half) return 0.5;
  if (w.size() < 4) throw std::invalid_argument("propensity: need at least 4 covariates");
  const double eta = (w[0] + w[1] + w[2] + w[3]) / 5.0;
  return 1.0 / (1.0 + std::exp(-eta));
}

inline double conditional_mean(const DgpSpec& spec, double a, const Eigen::RowVectorXd& w) {
  const double gw = w * spec.gamma;
  const double dw = w * spec.delta;
  if (spec.linear_outcome()) return a + gw + dw * a;
  return gw + 2.0 * std::atan(dw * a);
}

inline double true_cate(const DgpSpec& spec, const Eigen::RowVectorXd& w) {
  const double dw = w * spec.delta;
  return spec.linear_outcome() ? 1.0 + dw : 2.0 * std::atan(dw);
}

// Canonical ids: {rct|obs}-{sparse|nonsparse}-{linear|nonlinear}-{identity|block}.
// Support sizes scale with p so reduced-dimension desk runs keep the same
// sparse/non-sparse contrast (at p=500: |gamma|=5, |delta| = 10 or 50).
inline DgpSpec make_dgp_spec(const std::string& id, int p = 500, std::uint64_t block_seed = 0) {
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const std::size_t dash = s.find('-', start);
      parts.push_back(s.substr(start, dash - start));
      if (dash == std::string::npos) break;
      start = dash + 1;
    }
    return parts;
  };
  const auto parts = split(id);
  if (parts.size() != 4) throw std::invalid_argument("make_dgp_spec: bad id " + id);

  DgpSpec spec;
  spec.p = p;
  spec.block_seed = block_seed;
  if (parts[0] == "rct")
    spec.propensity_kind = PropensityKind::pi2_logistic;
  else if (parts[0] == "obs")
    spec.propensity_kind = PropensityKind::pi1_constant_half;
  else
    throw std::invalid_argument("make_dgp_spec: bad regime in " + id);

  bool sparse;
  if (parts[1] == "sparse")
    sparse = true;
  else if (parts[1] == "nonsparse")
    sparse = false;
  else
    throw std::invalid_argument("make_dgp_spec: bad sparsity in " + id);

  if (parts[2] == "linear")
    spec.outcome_kind = sparse ? OutcomeKind::mu1 : OutcomeKind::mu2;
  else if (parts[2] == "nonlinear")
    spec.outcome_kind = sparse ? OutcomeKind::mu3 : OutcomeKind::mu4;
  else
    throw std::invalid_argument("make_dgp_spec: bad outcome in " + id);

  if (parts[3] == "identity")
    spec.covariance_kind = CovarianceKind::identity;
  else if (parts[3] == "block")
    spec.covariance_kind = CovarianceKind::block;
  else
    throw std::invalid_argument("make_dgp_spec: bad covariance in " + id);

  const auto scaled = [p](int count_at_500) {
    return std::max(1, static_cast<int>(std::lround(count_at_500 * p / 500.0)));
  };
  const int n_gamma = scaled(5);
  const int n_delta = sparse ? scaled(10) : scaled(50);
  const double delta_value = sparse ? 2.0 : 0.5;
  if (n_gamma > p || n_delta > p)
    throw std::invalid_argument("make_dgp_spec: p too small for the coefficient supports");
  spec.gamma = Eigen::VectorXd::Zero(p);
  spec.gamma.head(n_gamma).setConstant(2.0);
  spec.delta = Eigen::VectorXd::Zero(p);
  spec.delta.head(n_delta).setConstant(delta_value);
  return spec;
}

inline std::string dgp_id(const DgpSpec& spec) {
  std::string id = spec.rct() ? "rct" : "obs";
  id += spec.sparse_tems() ? "-sparse" : "-nonsparse";
  id += spec.linear_outcome() ? "-linear" : "-nonlinear";
  id += spec.covariance_kind == CovarianceKind::identity ? "-identity" : "-block";
  return id;
}

inline std::vector<std::string> all_dgp_ids() {
  std::vector<std::string> ids;
  for (const char* regime : {"rct", "obs"})
    for (const char* sparsity : {"sparse", "nonsparse"})
      for (const char* outcome : {"linear", "nonlinear"})
        for (const char* cov : {"identity", "block"})
          ids.push_back(std::string(regime) + "-" + sparsity + "-" + outcome + "-" + cov);
  return ids;
}

inline Dataset sample_dataset(const DgpSpec& spec, int n, std::uint64_t seed,
                              bool with_potential_outcomes = false) {
  if (n < 1) throw std::invalid_argument("sample_dataset: n must be positive");
  if (spec.gamma.size() != spec.p || spec.delta.size() != spec.p)
    throw std::invalid_argument("sample_dataset: coefficient lengths must equal p");
  const CovarianceModel cov = make_covariance(spec.covariance_kind, spec.p, spec.block_seed);
  Rng rng(derive_seed(seed, "dgp_sample"));

  Dataset data;
  data.w.resize(n, spec.p);
  data.a.resize(n);
  data.y.resize(n);
  data.has_potential_outcomes = with_potential_outcomes;
  if (with_potential_outcomes) {
    data.y0.resize(n);
    data.y1.resize(n);
  }
  Eigen::VectorXd z(spec.p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < spec.p; ++j) z[j] = rng.normal();
    cov.apply_cholesky(z);
    data.w.row(i) = z.transpose();
    const double pi = propensity(spec.propensity_kind, data.w.row(i));
    const double a = rng.bernoulli(pi) ? 1.0 : 0.0;
    const double y0 = conditional_mean(spec, 0.0, data.w.row(i)) + spec.noise_sd * rng.normal();
    const double y1 = conditional_mean(spec, 1.0, data.w.row(i)) + spec.noise_sd * rng.normal();
    data.a[i] = a;
    data.y[i] = a * y1 + (1.0 - a) * y0;
    if (with_potential_outcomes) {
      data.y0[i] = y0;
      data.y1[i] = y1;
    }
  }
  return data;
}

struct MonteCarloValue {
  double value = 0.0;
  double std_error = 0.0;
};

// Mean noise-free outcome under `policy` (outcome noise has mean zero, so it
// is omitted from the oracle).
template <typename Policy>
MonteCarloValue monte_carlo_policy_value(const DgpSpec& spec, int n_mc, std::uint64_t seed,
                                         Policy&& policy) {
  if (n_mc < 1000) throw std::invalid_argument("monte_carlo_policy_value: n_mc too small");
  const CovarianceModel cov = make_covariance(spec.covariance_kind, spec.p, spec.block_seed);
  Rng rng(derive_seed(seed, "dgp_oracle"));
  Eigen::VectorXd z(spec.p);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    for (int j = 0; j < spec.p; ++j) z[j] = rng.normal();
    cov.apply_cholesky(z);
    const Eigen::RowVectorXd w = z.transpose();
    const double a = policy(w) ? 1.0 : 0.0;
    const double v = conditional_mean(spec, a, w);
    sum += v;
    sum_sq += v * v;
  }
  MonteCarloValue out;
  out.value = sum / n_mc;
  const double var = (sum_sq - sum * sum / n_mc) / (n_mc - 1);
  out.std_error = std::sqrt(std::max(0.0, var) / n_mc);
  return out;
}

inline MonteCarloValue monte_carlo_optimal_value(const DgpSpec& spec, int n_mc,
                                                 std::uint64_t seed) {
  return monte_carlo_policy_value(
      spec, n_mc, seed, [&](const Eigen::RowVectorXd& w) { return true_cate(spec, w) > 0.0; });
}

}  // namespace itr
