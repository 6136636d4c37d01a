#include <doctest.h>

#include <cmath>

#include "dsgd/baselines.hpp"
#include "dsgd/error.hpp"
#include "dsgd/predictor.hpp"
#include "helpers.hpp"

using namespace dsgd;

namespace {

TrainConfig cfg_of(double theta, double nu, std::size_t batch, std::size_t block, std::uint64_t iters) {
  TrainConfig c;
  c.theta = theta;
  c.nu = nu;
  c.batch_size = batch;
  c.block_size = block;
  c.iterations = iters;
  c.base_seed = 12;
  return c;
}

double holdout_mse(const Eigen::VectorXd& p, const Dataset& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += std::pow(p(static_cast<Eigen::Index>(i)) - d.y[i], 2);
  return s / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("NORMA and doubly SGD coincide under the identity map") {
  RandomStream g(1, 0);
  const auto data = testing::random_regression(g, 40, 3);
  const auto cfg = cfg_of(0.9, 0.5, 3, 3, 200);
  Trainer ds(data, cfg, linear_kernel(), make_loss(LossKind::square));
  NormaTrainer nm(data, cfg, linear_kernel(), make_loss(LossKind::square));
  for (int t = 0; t < 200; ++t) {
    ds.step();
    nm.step();
    REQUIRE((ds.last_batch_scores().col(0) - nm.last_batch_scores()).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK((predict(ds.snapshot(), data.X).col(0) - predict(nm.model(), data.X)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("NORMA memory and empty model") {
  RandomStream g(2, 0);
  for (std::size_t d : {2u, 7u}) {
    const auto data = testing::random_regression(g, 30, d);
    const auto m = norma_train(data, cfg_of(1, 1, 1, 1, 25), gaussian_kernel(1.0), make_loss(LossKind::square));
    CHECK(m.memory() == 25 * (d + 1));
    const auto mb = norma_train(data, cfg_of(1, 1, 4, 1, 25), gaussian_kernel(1.0), make_loss(LossKind::square));
    CHECK(mb.memory() == 25 * 4 * (d + 1));
  }
  const auto data = testing::random_regression(g, 30, 2);
  const auto empty = norma_train(data, cfg_of(1, 1, 1, 1, 0), gaussian_kernel(1.0), make_loss(LossKind::square));
  CHECK(predict(empty, data.X).cwiseAbs().maxCoeff() == 0.0);
  Dataset classes = data;
  for (auto& y : classes.y) y = 1.0;
  CHECK_THROWS_AS(norma_train(classes, cfg_of(1, 1, 1, 1, 1), gaussian_kernel(1.0), multiclass_loss(3)),
                  InvalidArgument);
}

TEST_CASE("NORMA cached and recomputed evaluation agree") {
  RandomStream g(3, 0);
  const auto data = testing::random_regression(g, 20, 2);
  auto cfg = cfg_of(2.0, 1.0, 2, 1, 40);  // reset at t = 2
  cfg.strategy = EvalStrategy::cached;
  NormaTrainer a(data, cfg, gaussian_kernel(1.0), make_loss(LossKind::square));
  cfg.strategy = EvalStrategy::recompute;
  NormaTrainer b(data, cfg, gaussian_kernel(1.0), make_loss(LossKind::square));
  for (int t = 0; t < 40; ++t) {
    a.step();
    b.step();
    CHECK((a.last_batch_scores() - b.last_batch_scores()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("r-Pegasos") {
  const auto all = synth_regression(1200, 5);
  const auto [train, holdout] = split(all, 0.25, 5);
  const auto k = gaussian_kernel(1.0);
  const auto cfg = cfg_of(1.0, 1e-4, 16, 1, 600);
  const auto sq = make_loss(LossKind::square);
  const auto one = rpegasos_train(train, 1, cfg, k, sq);
  const auto many = rpegasos_train(train, 256, cfg, k, sq);
  CHECK(many.memory() == 256);
  const double e1 = holdout_mse(predict(one, holdout.X).col(0), holdout);
  const double e256 = holdout_mse(predict(many, holdout.X).col(0), holdout);
  CHECK(e256 < e1);
  const auto again = rpegasos_train(train, 256, cfg, k, sq);
  CHECK(again.weights == many.weights);

  // Doubly SGD with 600 x 1 features against the fixed 256-feature model.
  const Model ds = dsgd::train(train, cfg, k, sq);
  const double eds = holdout_mse(predict(ds, holdout.X).col(0), holdout);
  double zero = 0.0;
  for (double y : holdout.y) zero += y * y;
  zero /= static_cast<double>(holdout.size());
  CHECK(eds < zero);
  CHECK(e256 < zero);

  RandomStream g(4, 0);
  const auto bin = testing::random_binary(g, 100, 2);
  const double nu = 0.5;
  const auto hinge = rpegasos_train(bin, 32, cfg_of(1.0 / nu, nu, 4, 1, 100), k, make_loss(LossKind::hinge));
  double norm2 = 0.0;
  for (double w : hinge.weights) norm2 += w * w;
  CHECK(std::sqrt(norm2) <= 1.0 / std::sqrt(nu) + 1e-12);
  CHECK_THROWS_AS(rpegasos_train(bin, 0, cfg, k, make_loss(LossKind::hinge)), InvalidArgument);
}

TEST_CASE("solver factory") {
  RandomStream g(5, 0);
  const auto data = testing::random_regression(g, 30, 4);
  const auto cfg = cfg_of(1, 1, 1, 8, 10);
  for (const std::string name : {"dsgd", "norma", "rpegasos"}) {
    auto s = make_solver(name, data, cfg, gaussian_kernel(1.0), make_loss(LossKind::square), 16);
    CHECK(s->name() == name);
    for (int i = 0; i < 10; ++i) s->step();
    CHECK(s->iteration() == 10);
    CHECK(s->predict(data.X).rows() == 30);
    const std::size_t expected = name == "dsgd" ? 10 * 8 : name == "norma" ? 10 * 5 : 16;
    CHECK(s->coefficient_memory() == expected);
  }
  CHECK_THROWS_AS(make_solver("sdca", data, cfg, gaussian_kernel(1.0), make_loss(LossKind::square), 1),
                  InvalidArgument);
}
