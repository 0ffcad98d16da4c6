#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "itr/cate.hpp"
#include "itr/dgp.hpp"
#include "test_util.hpp"

using namespace itr;
using testutil::random_matrix;
using testutil::random_vector;

namespace {

CateConfig fast_config(std::uint64_t seed) {
  CateConfig config;
  config.seed = seed;
  config.cv_folds = 5;
  config.grid_size = 40;
  config.boost.n_rounds = 30;
  config.sl_rf_trees = 20;
  config.sl_gbt_rounds = 10;
  config.forest.n_trees = 50;
  return config;
}

Dataset toy_dataset(Rng& rng, int n, int p) {
  Dataset data;
  data.w = random_matrix(rng, n, p);
  data.a.resize(n);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) data.a[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return data;
}

double sign_agreement(const CateModel& model, const DgpSpec& spec, const Eigen::MatrixXd& w) {
  const Eigen::VectorXd gamma = model.predict_cate(w);
  int agree = 0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    agree += (gamma[i] > 0.0) == (true_cate(spec, w.row(i)) > 0.0);
  return static_cast<double>(agree) / static_cast<double>(w.rows());
}

}  // namespace

TEST_CASE("plugin lasso finds a constant effect with mostly clean TEM sets") {
  // Min-CV lambda selection is liberal by design, so a minority of seeds pick
  // up a spurious interaction; the estimate of the constant effect itself is
  // unbiased because the treatment main effect is unpenalized.
  int clean = 0, total_tems = 0;
  double gamma_sum = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(2300 + seed);
    Dataset data = toy_dataset(rng, 1000, 5);
    for (int i = 0; i < 1000; ++i) data.y[i] = data.a[i] + rng.normal();
    const auto model = fit_plugin(data, PluginLearner::lasso_interactions, fast_config(seed));
    REQUIRE(model.builtin_tems.has_value());
    if (model.builtin_tems->empty()) ++clean;
    total_tems += static_cast<int>(model.builtin_tems->size());
    gamma_sum += model.predict_cate(Eigen::MatrixXd::Zero(1, 5))[0];
  }
  CHECK(clean >= 12);
  CHECK(total_tems <= 20);
  CHECK(std::abs(gamma_sum / 20.0 - 1.0) < 0.1);
}

TEST_CASE("plugin two-surface needs both arms populated") {
  Rng rng(8);
  Dataset data = toy_dataset(rng, 60, 3);
  data.a.setZero();
  data.a.head(5).setOnes();
  for (int i = 0; i < 60; ++i) data.y[i] = rng.normal();
  CHECK_THROWS_AS(fit_plugin(data, PluginLearner::xgboost_two_surface, fast_config(1)),
                  std::runtime_error);
}

TEST_CASE("plugin two-surface recovers a treatment shift") {
  Rng rng(12);
  Dataset data = toy_dataset(rng, 600, 4);
  for (int i = 0; i < 600; ++i) data.y[i] = 2.0 * data.a[i] + data.w(i, 0) + 0.3 * rng.normal();
  const auto model = fit_plugin(data, PluginLearner::xgboost_two_surface, fast_config(2));
  CHECK_FALSE(model.builtin_tems.has_value());
  const Eigen::VectorXd gamma = model.predict_cate(data.w.topRows(200));
  CHECK(std::abs(gamma.mean() - 2.0) < 0.5);
}

TEST_CASE("modified outcome trivial targets") {
  Rng rng(21);
  Dataset data = toy_dataset(rng, 400, 6);
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(400, 0.5);

  SECTION("zero outcome gives the zero estimator") {
    data.y.setZero();
    const auto model = fit_modified_outcome(data, half, fast_config(3));
    const Eigen::VectorXd gamma = model.predict_cate(data.w.topRows(50));
    CHECK(gamma.cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("constant transformed response gives a constant estimator") {
    for (int i = 0; i < 400; ++i) data.y[i] = (2.0 * data.a[i] - 1.0) / 2.0;
    const auto model = fit_modified_outcome(data, half, fast_config(4));
    const Eigen::VectorXd gamma = model.predict_cate(data.w.topRows(50));
    for (int i = 0; i < 50; ++i) CHECK(gamma[i] == Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("invalid propensity is rejected") {
    CHECK_THROWS_AS(fit_modified_outcome(data, Eigen::VectorXd::Ones(400), fast_config(5)),
                    std::invalid_argument);
  }
}

TEST_CASE("modified outcome tracks the CATE sign in the sparse linear DGP") {
  const auto spec = make_dgp_spec("rct-sparse-linear-identity", 100);
  const auto data = sample_dataset(spec, 1000, 71);
  Eigen::VectorXd pi(1000);
  for (int i = 0; i < 1000; ++i) pi[i] = propensity(spec.propensity_kind, data.w.row(i));
  const auto model = fit_modified_outcome(data, pi, fast_config(6));
  const auto test = sample_dataset(spec, 400, 72);
  CHECK(sign_agreement(model, spec, test.w) >= 0.7);
}

TEST_CASE("modified covariates estimators") {
  SECTION("gaussian lasso tracks the CATE sign") {
    const auto spec = make_dgp_spec("rct-sparse-linear-identity", 100);
    const auto data = sample_dataset(spec, 1000, 81);
    Eigen::VectorXd pi(1000);
    for (int i = 0; i < 1000; ++i) pi[i] = propensity(spec.propensity_kind, data.w.row(i));
    const auto model =
        fit_modified_covariates(data, Family::gaussian, ModCovLearner::lasso, pi, fast_config(7));
    REQUIRE(model.builtin_tems.has_value());
    const auto test = sample_dataset(spec, 400, 82);
    CHECK(sign_agreement(model, spec, test.w) >= 0.7);
  }
  SECTION("xgboost variant predicts without TEM classification") {
    Rng rng(31);
    Dataset data = toy_dataset(rng, 500, 5);
    for (int i = 0; i < 500; ++i)
      data.y[i] = data.a[i] * (1.0 + data.w(i, 0)) + 0.3 * rng.normal();
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(500, 0.5);
    const auto model = fit_modified_covariates(data, Family::gaussian, ModCovLearner::xgboost,
                                               half, fast_config(8));
    CHECK_FALSE(model.builtin_tems.has_value());
    Eigen::MatrixXd probe = Eigen::MatrixXd::Zero(2, 5);
    probe(0, 0) = 2.0;
    probe(1, 0) = -2.0;
    const Eigen::VectorXd gamma = model.predict_cate(probe);
    CHECK(gamma[0] > gamma[1]);
  }
  SECTION("binomial with an empty support is exactly zero") {
    Rng rng(41);
    Dataset data = toy_dataset(rng, 300, 8);
    for (int i = 0; i < 300; ++i) data.y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(300, 0.5);
    const auto model =
        fit_modified_covariates(data, Family::binomial, ModCovLearner::lasso, half, fast_config(9));
    REQUIRE(model.builtin_tems.has_value());
    if (model.builtin_tems->empty()) {
      const Eigen::VectorXd gamma = model.predict_cate(data.w.topRows(20));
      CHECK(gamma.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SECTION("binomial rejects a continuous outcome") {
    Rng rng(43);
    Dataset data = toy_dataset(rng, 100, 3);
    for (int i = 0; i < 100; ++i) data.y[i] = rng.normal();
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(100, 0.5);
    CHECK_THROWS_AS(
        fit_modified_covariates(data, Family::binomial, ModCovLearner::lasso, half, fast_config(10)),
        std::invalid_argument);
  }
}

TEST_CASE("augmentation removes pure main effects") {
  Rng rng(51);
  Dataset data = toy_dataset(rng, 600, 6);
  for (int i = 0; i < 600; ++i) data.y[i] = 2.0 * data.w(i, 1) - data.w(i, 3);
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(600, 0.5);
  const auto model =
      fit_augmented_modified_covariates(data, ModCovLearner::lasso, half, fast_config(11));
  CHECK(model.strategy == Strategy::augmented_modified_covariates_lasso);
  const Eigen::VectorXd gamma = model.predict_cate(data.w.topRows(100));
  CHECK(gamma.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("aipw transform evaluations") {
  CHECK(aipw_transform(1.0, 3.0, 0.0, 0.0, 0.5) == Catch::Approx(6.0));
  CHECK(aipw_transform(0.0, 1.0, 0.5, 2.0, 0.25) == Catch::Approx(5.0 / 6.0));
  // Zero residual: the transform collapses to the plug-in difference.
  CHECK(aipw_transform(1.0, 2.0, 0.7, 2.0, 0.3) == Catch::Approx(1.3));
  CHECK(aipw_transform(0.0, 0.7, 0.7, 2.0, 0.9) == Catch::Approx(1.3));

  NuisanceEstimates nuis;
  nuis.mu0 = [](const Eigen::MatrixXd& w) { return Eigen::VectorXd(w.col(0)); };
  nuis.mu1 = [](const Eigen::MatrixXd& w) { return Eigen::VectorXd(w.col(0).array() + 2.0); };
  nuis.pi = [](const Eigen::MatrixXd& w) {
    return Eigen::VectorXd::Constant(w.rows(), 0.4).eval();
  };
  Eigen::RowVectorXd w(2);
  w << 1.5, -3.0;
  CHECK(aipw_transform(w, 1.0, 3.5, nuis) == Catch::Approx(2.0));
}

TEST_CASE("aipw transform is invariant to the propensity under a perfect mu") {
  Eigen::RowVectorXd w(1);
  w << 0.3;
  for (double pi = 0.1; pi <= 0.91; pi += 0.1) {
    CHECK(aipw_transform(1.0, 1.7, 0.4, 1.7, pi) == Catch::Approx(1.3));
    CHECK(aipw_transform(0.0, 0.4, 0.4, 1.7, pi) == Catch::Approx(1.3));
  }
}

TEST_CASE("aipw transform is doubly robust in the mean") {
  const int n = 5000;
  Rng rng(61);
  Dataset data = toy_dataset(rng, n, 4);
  data.a.setZero();
  for (int i = 0; i < n; ++i) data.a[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  // mu(W,A) = A(1 + W1) + W2, ATE = 1.
  for (int i = 0; i < n; ++i)
    data.y[i] = data.a[i] * (1.0 + data.w(i, 0)) + data.w(i, 1) + rng.normal();

  auto mean_t = [&](auto mu0, auto mu1, auto pi) {
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = aipw_transform(data.a[i], data.y[i], mu0(i), mu1(i), pi(i));
      sum += t;
      sum_sq += t * t;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    return std::pair{mean, se};
  };

  SECTION("perfect mu, wrong pi") {
    auto [mean, se] = mean_t([&](int i) { return data.w(i, 1); },
                             [&](int i) { return 1.0 + data.w(i, 0) + data.w(i, 1); },
                             [](int) { return 0.15; });
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
  }
  SECTION("perfect pi, wrong mu") {
    auto [mean, se] =
        mean_t([](int) { return 0.0; }, [](int) { return 0.0; }, [](int) { return 0.4; });
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
  }
}

TEST_CASE("aipw second stages recover a linear CATE from true nuisances") {
  const auto spec = make_dgp_spec("rct-sparse-linear-identity", 50);
  const auto data = sample_dataset(spec, 800, 91);
  NuisanceValues nuis;
  nuis.mu0.resize(800);
  nuis.mu1.resize(800);
  nuis.pi.resize(800);
  nuis.pi_known = true;
  for (int i = 0; i < 800; ++i) {
    nuis.mu0[i] = conditional_mean(spec, 0.0, data.w.row(i));
    nuis.mu1[i] = conditional_mean(spec, 1.0, data.w.row(i));
    nuis.pi[i] = propensity(spec.propensity_kind, data.w.row(i));
  }
  const auto lasso = fit_aipw_cate(data, nuis, SecondStage::lasso, fast_config(12));
  REQUIRE(lasso.builtin_tems.has_value());
  const auto test = sample_dataset(spec, 300, 92);
  CHECK(sign_agreement(lasso, spec, test.w) >= 0.85);

  const auto sl = fit_aipw_cate(data, nuis, SecondStage::super_learner, fast_config(13));
  CHECK_FALSE(sl.builtin_tems.has_value());
  CHECK(sign_agreement(sl, spec, test.w) >= 0.75);
}

TEST_CASE("cross-fitted nuisances are deterministic and respect a known pi") {
  const auto spec = make_dgp_spec("rct-sparse-linear-identity", 5);
  const auto data = sample_dataset(spec, 150, 14);
  Eigen::VectorXd pi(150);
  for (int i = 0; i < 150; ++i) pi[i] = propensity(spec.propensity_kind, data.w.row(i));
  auto config = fast_config(15);
  config.sl_folds = 3;
  config.cross_fit_folds = 3;
  const auto a = estimate_nuisances(data, pi, config);
  const auto b = estimate_nuisances(data, pi, config);
  CHECK(a.mu0 == b.mu0);
  CHECK(a.mu1 == b.mu1);
  CHECK(a.pi_known);
  for (int i = 0; i < 150; ++i) CHECK(a.pi[i] == Catch::Approx(pi[i]));

  const auto est = estimate_nuisances(data, std::nullopt, config);
  CHECK_FALSE(est.pi_known);
  CHECK(est.pi.minCoeff() >= kPiFloor);
  CHECK(est.pi.maxCoeff() <= 1.0 - kPiFloor);
}

TEST_CASE("propensity lasso output is clamped and centered for a fair coin") {
  Rng rng(71);
  Dataset data = toy_dataset(rng, 400, 6);
  for (int i = 0; i < 400; ++i) data.y[i] = rng.normal();
  const auto pi = fit_propensity_lasso(data, fast_config(16));
  CHECK(pi.minCoeff() >= kPiFloor);
  CHECK(pi.maxCoeff() <= 1.0 - kPiFloor);
  CHECK(std::abs(pi.mean() - 0.5) < 0.1);
}

TEST_CASE("causal forest wrapper recovers a constant effect") {
  Rng rng(81);
  const int n = 800;
  Dataset data = toy_dataset(rng, n, 5);
  for (int i = 0; i < n; ++i) data.y[i] = 1.5 * data.a[i] + data.w(i, 0) + 0.5 * rng.normal();
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(n, 0.5);
  const auto [m_hat, pi_hat] = estimate_forest_nuisances(data, half, fast_config(17));
  const auto model = fit_causal_forest_cate(data, m_hat, pi_hat, fast_config(17));
  CHECK(model.strategy == Strategy::causal_forest);
  CHECK_FALSE(model.builtin_tems.has_value());
  const Eigen::VectorXd gamma = model.predict_cate(data.w.topRows(200));
  CHECK(std::abs(gamma.mean() - 1.5) < 0.3);
}

TEST_CASE("rules threshold the CATE at zero") {
  CateModel model;
  model.cate_fn = [](const Eigen::MatrixXd& w) {
    Eigen::VectorXd out(3);
    out << 0.2, 0.0, -3.0;
    return out.topRows(w.rows()).eval();
  };
  const ItrRule rule{model};
  const Eigen::VectorXd assigned = rule.assign(Eigen::MatrixXd::Zero(3, 1));
  CHECK(assigned[0] == 1.0);
  CHECK(assigned[1] == 0.0);
  CHECK(assigned[2] == 0.0);
  CHECK(assign_treatment(rule, Eigen::RowVectorXd::Zero(1)) == 1);
}

TEST_CASE("classify_tems follows the strategy table") {
  Rng rng(91);
  Dataset data = toy_dataset(rng, 200, 4);
  for (int i = 0; i < 200; ++i) data.y[i] = data.a[i] + 0.1 * rng.normal();
  const auto with = fit_plugin(data, PluginLearner::lasso_interactions, fast_config(18));
  CHECK(classify_tems(with).has_value());
  const auto without = fit_plugin(data, PluginLearner::xgboost_two_surface, fast_config(19));
  CHECK_FALSE(classify_tems(without).has_value());
}
