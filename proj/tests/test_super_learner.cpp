#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "itr/super_learner.hpp"
#include "test_util.hpp"

using namespace itr;
using testutil::random_matrix;
using testutil::random_vector;

TEST_CASE("single-learner library gets weight one") {
  Rng rng(3);
  const Eigen::MatrixXd x = random_matrix(rng, 80, 4);
  const Eigen::VectorXd y = x.col(0) + 0.2 * random_vector(rng, 80);
  std::vector<LearnerSpec> lib(1);
  lib[0].kind = LearnerKind::lasso;
  const auto sl = fit_super_learner(lib, x, y, Family::gaussian, 5, 11);
  REQUIRE(sl.weights.size() == 1);
  CHECK(sl.weights[0] == Catch::Approx(1.0));
  CHECK(sl.combination_cv_risk == Catch::Approx(sl.learner_cv_risk[0]));
}

TEST_CASE("weights form a simplex and the combination dominates each learner") {
  Rng rng(9);
  const Eigen::MatrixXd x = random_matrix(rng, 150, 5);
  Eigen::VectorXd y(150);
  for (int i = 0; i < 150; ++i)
    y[i] = std::sin(x(i, 0)) + 0.5 * x(i, 1) + 0.3 * rng.normal();
  const auto sl = fit_super_learner(default_super_learner_library(30, 20), x, y,
                                    Family::gaussian, 5, 42);
  CHECK(sl.weights.minCoeff() >= 0.0);
  CHECK(sl.weights.sum() == Catch::Approx(1.0).epsilon(1e-10));
  for (Eigen::Index k = 0; k < sl.learner_cv_risk.size(); ++k)
    CHECK(sl.combination_cv_risk <= sl.learner_cv_risk[k] + 1e-8);
}

TEST_CASE("the well-specified learner carries most of the weight") {
  int wins = 0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const int n = 200, d = 6;
    const Eigen::MatrixXd x = random_matrix(rng, n, d);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    beta[0] = 2.0;
    beta[2] = -1.0;
    Eigen::VectorXd y = x * beta;
    for (int i = 0; i < n; ++i) y[i] += 0.3 * rng.normal();

    std::vector<LearnerSpec> lib(2);
    lib[0].kind = LearnerKind::lasso;
    lib[1].kind = LearnerKind::random_forest;
    lib[1].forest.n_trees = 20;
    lib[1].forest.max_depth = 3;
    const auto sl = fit_super_learner(lib, x, y, Family::gaussian, 5, 900 + seed);
    if (sl.weights[0] >= 0.8) ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("super learner fits are deterministic") {
  Rng rng(17);
  const Eigen::MatrixXd x = random_matrix(rng, 100, 4);
  const Eigen::VectorXd y = x.col(0).array().square() + 0.1;
  const auto lib = default_super_learner_library(15, 10);
  const auto a = fit_super_learner(lib, x, y, Family::gaussian, 5, 77);
  const auto b = fit_super_learner(lib, x, y, Family::gaussian, 5, 77);
  CHECK(a.weights == b.weights);
  CHECK(a.combination_cv_risk == b.combination_cv_risk);
  const Eigen::MatrixXd xt = random_matrix(rng, 20, 4);
  CHECK(predict_super_learner(a, xt) == predict_super_learner(b, xt));
}

TEST_CASE("binomial predictions stay inside the clamp") {
  Rng rng(23);
  const int n = 150;
  const Eigen::MatrixXd x = random_matrix(rng, n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.bernoulli(detail::sigmoid(3.0 * x(i, 0))) ? 1.0 : 0.0;
  std::vector<LearnerSpec> lib(2);
  lib[0].kind = LearnerKind::lasso;
  lib[1].kind = LearnerKind::gradient_boosting;
  lib[1].boost.n_rounds = 20;
  const auto sl = fit_super_learner(lib, x, y, Family::binomial, 5, 5);
  const auto pred = predict_super_learner(sl, x);
  CHECK(pred.minCoeff() >= detail::kProbClamp);
  CHECK(pred.maxCoeff() <= 1.0 - detail::kProbClamp);
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += (pred[i] > 0.5) == (y[i] == 1.0);
  CHECK(correct > n * 0.7);
}

TEST_CASE("fit_super_learner rejects bad input") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 2);
  const Eigen::VectorXd y = Eigen::VectorXd::Random(20);
  CHECK_THROWS_AS(fit_super_learner({}, x, y, Family::gaussian, 5, 1), std::invalid_argument);
  std::vector<LearnerSpec> lib(1);
  CHECK_THROWS_AS(fit_super_learner(lib, x, y, Family::gaussian, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(fit_super_learner(lib, x, Eigen::VectorXd::Random(19), Family::gaussian, 5, 1),
                  std::invalid_argument);
}
