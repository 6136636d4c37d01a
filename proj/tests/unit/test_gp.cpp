#include <doctest.h>

#include <cmath>

#include "dsgd/error.hpp"
#include "dsgd/gp_posterior.hpp"
#include "dsgd/predictor.hpp"
#include "helpers.hpp"

using namespace dsgd;

namespace {

double feature(const FeatureBlock& b, const KernelSpec& k, const std::vector<double>& x) {
  const Eigen::Map<const RowMatrix> row(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  return featurize(b, k, row)(0, 0);
}

}  // namespace

TEST_CASE("closed-form posterior limits") {
  const auto k = gaussian_kernel(1.0);
  RowMatrix X(1, 2);
  X << 0.2, -0.4;
  Eigen::VectorXd y(1);
  y << 1.7;
  const double s2 = 0.3;
  const auto p = closed_form_posterior(X, y, X, k, s2);
  CHECK(p.mean(0) == doctest::Approx(1.7 / (1 + s2)).epsilon(1e-14));
  CHECK(p.variance(0) == doctest::Approx(1 - 1 / (1 + s2)).epsilon(1e-14));

  RandomStream g(1, 0);
  const RowMatrix P = testing::random_matrix(g, 8, 2, -3, 3);
  Eigen::VectorXd t(8);
  for (int i = 0; i < 8; ++i) t(i) = g.uniform(-1, 1);
  const RowMatrix S = testing::random_matrix(g, 5, 2, -3, 3);
  const auto prior = closed_form_posterior(P, t, S, k, 1e12);
  CHECK(prior.mean.cwiseAbs().maxCoeff() < 1e-10);
  CHECK((prior.variance.array() - 1.0).abs().maxCoeff() < 1e-10);

  RowMatrix far(3, 1);
  far << -6, 0, 6;
  Eigen::VectorXd fy(3);
  fy << 0.5, -1.0, 2.0;
  const auto interp = closed_form_posterior(far, fy, far, k, 1e-8);
  CHECK((interp.mean - fy).cwiseAbs().maxCoeff() <= 1e-4);

  CHECK_THROWS_AS(closed_form_posterior(X, y, X, k, 0.0), InvalidArgument);
  CHECK_THROWS_AS(closed_form_posterior(RowMatrix::Zero(kMaxDenseGp + 1, 1),
                                        Eigen::VectorXd::Zero(kMaxDenseGp + 1), X.leftCols(1), k, 1.0),
                  InvalidArgument);
}

TEST_CASE("posterior mean delegates to square-loss training") {
  RandomStream g(2, 0);
  const auto data = testing::random_regression(g, 20, 2);
  TrainConfig cfg;
  cfg.theta = 0.5;
  cfg.batch_size = 2;
  cfg.block_size = 4;
  cfg.iterations = 30;
  const auto k = gaussian_kernel(1.0);
  const double s2 = 0.1;
  TrainConfig doubled = cfg;
  doubled.nu = 2 * s2;
  CHECK(ds_posterior_mean(data, cfg, k, s2, GpNuRule::two_sigma2) ==
        train(data, doubled, k, make_loss(LossKind::square)));
  TrainConfig exact = cfg;
  exact.nu = s2 / 20.0;
  CHECK(ds_posterior_mean(data, cfg, k, s2) == train(data, exact, k, make_loss(LossKind::square)));

  cfg.theta = 1e-6;  // theta nu = 1 with nu = s2 / n
  const Model heavy = ds_posterior_mean(data, cfg, k, 1e7 * 20);
  CHECK(predict(heavy, data.X).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("operator recursion: first step, zero step and two-step expansion") {
  const auto k = gaussian_kernel(1.0);
  const std::vector<double> x1{0.3, -0.2}, x2{-1.0, 0.5};
  const double s2 = 0.2, g1 = 0.7, g2 = 0.35;
  const std::size_t n = 10;
  VarianceOperatorState st(k, 2, 17);
  ds_variance_operator_step(st, x1, g1, s2, n);
  const auto w1 = sample_block(k, 2, 1, 17, 1);
  const auto w1p = sample_block(k, 2, 1, domain_key(17, domains::kPrimed), 1);
  REQUIRE(st.theta.size() == 1);
  const double t11 = g1 * feature(w1, k, x1) * feature(w1p, k, x1);
  CHECK(st.at(0, 0) == t11);

  VarianceOperatorState zero = st;
  ds_variance_operator_step(zero, x2, 0.0, s2, n);
  CHECK(zero.at(0, 0) == st.at(0, 0));
  CHECK(zero.at(0, 1) == 0.0);
  CHECK(zero.at(1, 1) == 0.0);

  ds_variance_operator_step(st, x2, g2, s2, n);
  const auto w2 = sample_block(k, 2, 1, 17, 2);
  const auto w2p = sample_block(k, 2, 1, domain_key(17, domains::kPrimed), 2);
  CHECK(st.at(0, 0) == doctest::Approx(t11 * (1 - s2 * g2 / n)).epsilon(1e-15));
  CHECK(st.at(0, 1) == doctest::Approx(-g2 * t11 * feature(w1p, k, x2) * feature(w2p, k, x2)).epsilon(1e-15));
  CHECK(st.at(1, 1) == doctest::Approx(g2 * feature(w2, k, x2) * feature(w2p, k, x2)).epsilon(1e-15));
  CHECK(st.memory() == 3);
  CHECK_THROWS_AS(ds_variance_operator_step(st, std::vector<double>{1.0}, g2, s2, n), InvalidArgument);
}

TEST_CASE("operator with the identity map converges to C (C + s2/n)^-1") {
  RowMatrix X = RowMatrix::Ones(5, 1);
  const double s2 = 0.5;
  const auto st = ds_variance_operator(X, linear_kernel(), s2, 1.0, 400, 3);
  const double target = 1.0 / (1.0 + s2 / 5.0);
  const Eigen::VectorXd q = operator_quadratic_form(st, X.topRows(1));
  CHECK(q(0) == doctest::Approx(target).epsilon(1e-3));
  // Equals the closed-form quadratic term for n identical points.
  const auto exact = closed_form_posterior(X, Eigen::VectorXd::Zero(5), X.topRows(1), linear_kernel(), s2);
  CHECK(1.0 - q(0) == doctest::Approx(exact.variance(0)).epsilon(2e-3));
  CHECK(st.memory() == 400 * 401 / 2);
}

TEST_CASE("operator step cap") {
  VarianceOperatorState st(linear_kernel(), 1, 1);
  st.t = kMaxOperatorSteps;
  CHECK_THROWS_AS(ds_variance_operator_step(st, std::vector<double>{1.0}, 0.1, 1.0, 1), InvalidArgument);
}

TEST_CASE("per-test-point variance recovers the 1x1 closed form") {
  Dataset data;
  data.X.resize(1, 2);
  data.X << 0.4, 0.1;
  data.y = {0.0};
  const auto k = gaussian_kernel(1.0);
  const double s2 = 1.0;
  TrainConfig cfg;
  cfg.theta = 1.0;  // theta nu = 1 with nu = s2 / n = 1
  cfg.batch_size = 1;
  cfg.block_size = 64;
  cfg.iterations = 3000;
  const Model m = ds_variance_testpoints(data, data.X, cfg, k, s2);
  CHECK(m.outputs == 1);
  const auto est = testpoint_variance(m, data.X);
  CHECK(est.variance(0) == doctest::Approx(1.0 - 1.0 / (1.0 + s2)).epsilon(0.05));
  CHECK_THROWS_AS(testpoint_variance(m, RowMatrix::Zero(2, 2)), InvalidArgument);
}

TEST_CASE("variance clamping counts violations") {
  const auto k = gaussian_kernel(1.0);
  const RowMatrix X = RowMatrix::Zero(3, 1);
  Eigen::VectorXd q(3);
  q << -0.5, 0.25, 1.5;
  const auto est = clamp_variance(k, X, q);
  CHECK(est.clamped == 2);
  CHECK(est.variance(0) == 1.0);
  CHECK(est.variance(1) == 0.75);
  CHECK(est.variance(2) == 0.0);
}
