#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "itr/elastic_net.hpp"
#include "test_util.hpp"

using namespace itr;
using testutil::random_matrix;
using testutil::random_vector;

TEST_CASE("soft_threshold") {
  CHECK(soft_threshold(0.5, 1.0) == 0.0);
  CHECK(soft_threshold(2.0, 0.5) == 1.5);
  CHECK(soft_threshold(-2.0, 0.5) == -1.5);
  CHECK(soft_threshold(0.0, 0.0) == 0.0);
}

TEST_CASE("lambda at or above lambda_max gives an exactly zero fit") {
  Rng rng(7);
  const Eigen::MatrixXd x = random_matrix(rng, 60, 8);
  const Eigen::VectorXd y = random_vector(rng, 60);
  RegressionProblem p{x, y};
  // lambda_max on the standardized scale.
  Eigen::MatrixXd xs = x;
  const Eigen::VectorXd yc = y.array() - y.mean();
  double lmax = 0.0;
  for (int j = 0; j < 8; ++j) {
    xs.col(j).array() -= xs.col(j).mean();
    xs.col(j) /= std::sqrt(xs.col(j).squaredNorm() / 60.0);
    lmax = std::max(lmax, std::abs(xs.col(j).dot(yc)) / 60.0);
  }
  for (double lambda : {lmax, 2 * lmax, 10 * lmax}) {
    const auto fit = fit_elastic_net(p, lambda);
    CHECK(fit.coefficients.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.intercept == Catch::Approx(y.mean()));
  }
}

TEST_CASE("lambda zero matches the normal-equation solution") {
  Rng rng(11);
  const Eigen::MatrixXd x = random_matrix(rng, 80, 6);
  const Eigen::VectorXd beta_true = random_vector(rng, 6);
  const Eigen::VectorXd y = x * beta_true + 0.3 * random_vector(rng, 80);

  RegressionProblem p{x, y};
  const auto fit = fit_elastic_net(p, 0.0);

  Eigen::MatrixXd xi(80, 7);
  xi << Eigen::VectorXd::Ones(80), x;
  const Eigen::VectorXd ols = (xi.transpose() * xi).ldlt().solve(xi.transpose() * y);
  CHECK(std::abs(fit.intercept - ols[0]) < 1e-6);
  for (int j = 0; j < 6; ++j) CHECK(std::abs(fit.coefficients[j] - ols[j + 1]) < 1e-6);
}

TEST_CASE("single-column lasso solves the one-coordinate update") {
  Eigen::MatrixXd x(2, 1);
  x << 1, -1;
  Eigen::VectorXd y(2);
  y << 2, -2;
  RegressionProblem p{x, y};
  p.fit_intercept = false;
  p.standardize = false;
  const auto fit = fit_elastic_net(p, 1.0);
  CHECK(fit.coefficients[0] == Catch::Approx(1.0));
  CHECK(testutil::kkt_max_violation(p, fit) < 1e-9);
}

TEST_CASE("KKT conditions hold on random problems") {
  Rng rng(21);
  for (int rep = 0; rep < 25; ++rep) {
    const int n = 30 + static_cast<int>(rng.uniform_int(50));
    const int d = 5 + static_cast<int>(rng.uniform_int(40));
    RegressionProblem p;
    p.design = random_matrix(rng, n, d);
    p.response = random_vector(rng, n);
    p.penalty_mix = rng.uniform();
    p.fit_intercept = rep % 2 == 0;
    p.standardize = rep % 3 != 0;
    const double lambda = 0.01 + rng.uniform() * 0.3;
    const auto fit = fit_elastic_net(p, lambda);
    CHECK(testutil::kkt_max_violation(p, fit) < 1e-5);
  }
}

TEST_CASE("ridge matches the closed form") {
  Rng rng(33);
  const int n = 50, d = 4;
  RegressionProblem p;
  p.design = random_matrix(rng, n, d);
  p.response = random_vector(rng, n);
  p.penalty_mix = 0.0;
  p.fit_intercept = false;
  p.standardize = false;
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 + rng.uniform();
  p.weights = w;
  const double lambda = 0.37;
  const auto fit = fit_elastic_net(p, lambda);
  const Eigen::MatrixXd xtwx =
      p.design.transpose() * w.asDiagonal() * p.design +
      static_cast<double>(n) * lambda * Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd closed = xtwx.ldlt().solve(p.design.transpose() * (w.asDiagonal() * p.response));
  for (int j = 0; j < d; ++j) CHECK(std::abs(fit.coefficients[j] - closed[j]) < 1e-6);
}

TEST_CASE("predict_linear") {
  FittedLinearModel m;
  m.coefficients = Eigen::VectorXd::Zero(3);
  m.column_means = Eigen::VectorXd::Zero(3);
  m.column_scales = Eigen::VectorXd::Ones(3);

  SECTION("all-zero coefficients, gaussian intercept") {
    m.intercept = 0.7;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
    const auto pred = predict_linear(m, x);
    for (int i = 0; i < 5; ++i) CHECK(pred[i] == Catch::Approx(0.7));
  }
  SECTION("all-zero coefficients, binomial") {
    m.family = Family::binomial;
    const auto pred = predict_linear(m, Eigen::MatrixXd::Random(4, 3));
    for (int i = 0; i < 4; ++i) CHECK(pred[i] == Catch::Approx(0.5));
  }
  SECTION("identity column pick") {
    m.coefficients << 1, 0, 0;
    Eigen::MatrixXd x(1, 3);
    x << 3, -1, 9;
    CHECK(predict_linear(m, x)[0] == Catch::Approx(3.0));
  }
  SECTION("column mismatch throws") {
    CHECK_THROWS_AS(predict_linear(m, Eigen::MatrixXd::Random(2, 4)), std::invalid_argument);
  }
}

TEST_CASE("cv_select_lambda contract and determinism") {
  Rng rng(44);
  RegressionProblem p;
  p.design = random_matrix(rng, 50, 6);
  p.response = random_vector(rng, 50);
  const auto cv = cv_select_lambda(p, 5, 30, 123);
  CHECK(cv.cv_risk.size() == cv.lambda_grid.size());
  CHECK(cv.lambda_grid.size() == 30);
  for (int k = 1; k < 30; ++k) CHECK(cv.lambda_grid[k] < cv.lambda_grid[k - 1]);
  CHECK(cv.cv_risk.minCoeff() ==
        cv.cv_risk[std::distance(
            cv.lambda_grid.data(),
            std::find(cv.lambda_grid.data(), cv.lambda_grid.data() + 30, cv.selected_lambda))]);

  const auto cv2 = cv_select_lambda(p, 5, 30, 123);
  CHECK(cv.selected_lambda == cv2.selected_lambda);
  CHECK(cv.cv_risk == cv2.cv_risk);
  CHECK(cv.fold_assignment == cv2.fold_assignment);

  CHECK_THROWS_AS(cv_select_lambda(p, 60, 30, 1), std::invalid_argument);
}

TEST_CASE("cv lasso recovers a sparse support") {
  int hits = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const int n = 200, d = 20;
    const Eigen::MatrixXd x = random_matrix(rng, n, d);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    beta[0] = 1.0;
    beta[1] = -1.5;
    const Eigen::VectorXd y = x * beta + 0.01 * random_vector(rng, n);
    RegressionProblem p{x, y};
    const auto fit = fit_cv(p, 10, 50, 500 + seed);
    if (fit.coefficients[0] != 0.0 && fit.coefficients[1] != 0.0) ++hits;
  }
  CHECK(hits >= 19);
}

TEST_CASE("cv lasso stays sparse under pure noise") {
  int sparse_enough = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(2000 + seed);
    RegressionProblem p;
    p.design = random_matrix(rng, 300, 20);
    p.response = random_vector(rng, 300);
    const auto fit = fit_cv(p, 10, 50, 700 + seed);
    int nnz = 0;
    for (int j = 0; j < 20; ++j) nnz += fit.coefficients[j] != 0.0;
    if (nnz <= 3) ++sparse_enough;
  }
  CHECK(sparse_enough >= 16);
}

TEST_CASE("binomial fit recovers a separable direction") {
  Rng rng(55);
  const int n = 300;
  Eigen::MatrixXd x = random_matrix(rng, n, 5);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.bernoulli(detail::sigmoid(2.5 * x(i, 0))) ? 1.0 : 0.0;
  RegressionProblem p{x, y, Family::binomial};
  const auto fit = fit_cv(p, 5, 40, 99);
  CHECK(fit.coefficients[0] > 0.5);
  const auto pred = predict_linear(fit, x);
  CHECK(pred.minCoeff() > 0.0);
  CHECK(pred.maxCoeff() < 1.0);
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += (pred[i] > 0.5) == (y[i] == 1.0);
  CHECK(correct > n * 0.7);
}

TEST_CASE("penalty factors exempt chosen coefficients") {
  Rng rng(66);
  const int n = 120, d = 6;
  RegressionProblem p;
  p.design = random_matrix(rng, n, d);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  beta[0] = 1.0;
  beta[3] = -2.0;
  p.response = p.design * beta + 0.2 * random_vector(rng, n);
  p.penalty_factors = Eigen::VectorXd::Ones(d);
  p.penalty_factors[0] = 0.0;

  // At lambda_max every penalized coefficient is zero, but the unpenalized
  // one is free to fit.
  const auto cv = cv_select_lambda(p, 5, 20, 7);
  const auto at_max = fit_elastic_net(p, cv.lambda_grid[0]);
  CHECK(at_max.coefficients.tail(d - 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(at_max.coefficients[0] != 0.0);

  const auto fit = fit_elastic_net(p, 0.05);
  CHECK(testutil::kkt_max_violation(p, fit) < 1e-6);
  CHECK(std::abs(fit.coefficients[0] - 1.0) < 0.1);
}

TEST_CASE("invalid input is rejected") {
  RegressionProblem p;
  p.design = Eigen::MatrixXd::Random(10, 2);
  p.response = Eigen::VectorXd::Random(10);
  p.design(3, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_elastic_net(p, 0.1), std::invalid_argument);

  RegressionProblem q;
  q.design = Eigen::MatrixXd::Random(10, 2);
  q.response = Eigen::VectorXd::Random(10);
  q.family = Family::binomial;  // responses not 0/1
  CHECK_THROWS_AS(fit_elastic_net(q, 0.1), std::invalid_argument);

  RegressionProblem r;
  r.design = Eigen::MatrixXd::Random(1, 2);
  r.response = Eigen::VectorXd::Random(1);
  CHECK_THROWS_AS(fit_elastic_net(r, 0.1), std::invalid_argument);
}
