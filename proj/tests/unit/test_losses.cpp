#include <doctest.h>

#include <cmath>

#include "dsgd/analysis.hpp"
#include "dsgd/error.hpp"
#include "dsgd/loss.hpp"
#include "helpers.hpp"

using namespace dsgd;

TEST_CASE("loss values") {
  CHECK(loss_value(make_loss(LossKind::hinge), 2.0, 1.0) == 0.0);
  CHECK(loss_value(make_loss(LossKind::square), 0.7, 0.7) == 0.0);
  CHECK(loss_value(make_loss(LossKind::huber), 3.0, 1.0) == 1.5);
  CHECK(loss_value(make_loss(LossKind::huber), 1.5, 1.0) == 0.125);
  CHECK(loss_value(eps_insensitive_loss(0.5), 2.0, 1.0) == 0.5);
  CHECK(loss_value(quantile_loss(0.3), 0.0, 1.0) == doctest::Approx(0.3));
  CHECK(loss_value(make_loss(LossKind::logistic), 0.0, 1.0) == doctest::Approx(std::log(2.0)));
  const std::vector<double> u{0.0, 0.0, 0.0};
  CHECK(loss_value(multiclass_loss(3), u, 1.0) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("loss gradients from the case tables") {
  CHECK(loss_grad(make_loss(LossKind::hinge), 0.5, -1.0) == 1.0);
  CHECK(loss_grad(make_loss(LossKind::hinge), 1.0, 1.0) == 0.0);  // tie takes the >= branch
  CHECK(loss_grad(make_loss(LossKind::hinge), 0.2, 1.0) == -1.0);
  CHECK(loss_grad(make_loss(LossKind::logistic), 0.0, 1.0) == doctest::Approx(-0.5));
  CHECK(loss_grad(quantile_loss(0.3), 2.0, 1.0) == doctest::Approx(0.7));
  CHECK(loss_grad(quantile_loss(0.3), 1.0, 1.0) == doctest::Approx(0.7));
  CHECK(loss_grad(quantile_loss(0.3), 0.0, 1.0) == doctest::Approx(-0.3));
  CHECK(loss_grad(eps_insensitive_loss(0.5), 1.5, 1.0) == 0.0);
  CHECK(loss_grad(eps_insensitive_loss(0.5), 1.6, 1.0) == 1.0);
  CHECK(loss_grad(eps_insensitive_loss(0.0), 0.0, 1.0) == -1.0);
  CHECK(loss_grad(make_loss(LossKind::squared_hinge), 0.0, -1.0) == 1.0);
  CHECK(loss_grad(make_loss(LossKind::huber), 4.0, 1.0) == 1.0);
  CHECK(loss_grad(make_loss(LossKind::square), 3.0, 1.0) == 2.0);
}

TEST_CASE("multiclass gradient is softmax minus indicator") {
  testing::for_all(50, 5, [](RandomStream& g) {
    const auto spec = multiclass_loss(4);
    std::vector<double> u(4), grad(4);
    for (auto& v : u) v = g.uniform(-10, 10);
    const double y = static_cast<double>(g.below(4));
    loss_grad(spec, u, y, grad);
    double sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) sum += grad[k] + (k == y ? 1.0 : 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(grad[static_cast<std::size_t>(y)] <= 0.0);
  });
}

TEST_CASE("target validation") {
  CHECK_THROWS_AS(loss_value(make_loss(LossKind::hinge), 0.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(loss_value(multiclass_loss(3), std::vector<double>{0, 0, 0}, 3.0), InvalidArgument);
  CHECK_THROWS_AS(loss_value(multiclass_loss(3), std::vector<double>{0, 0}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(loss_grad(make_loss(LossKind::kl_density_ratio), 0.0, 2.0), InvalidArgument);
  CHECK_THROWS_AS(multiclass_loss(1).validate(), InvalidArgument);
  CHECK_THROWS_AS(quantile_loss(1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(eps_insensitive_loss(-0.1).validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_loss_kind("cross_entropy"), InvalidArgument);
}

TEST_CASE("novelty case selector") {
  auto a = novelty_grads(1.0, 0.0);
  CHECK(a.alpha_sign == 0);
  CHECK(a.tau_direction == TauStep::up);
  auto b = novelty_grads(-1.0, 0.0);
  CHECK(b.alpha_sign == 1);
  CHECK(b.tau_direction == TauStep::down);
  auto tie = novelty_grads(0.25, 0.25);
  CHECK(tie.alpha_sign == 0);
  CHECK(tie.tau_direction == TauStep::up);
}

TEST_CASE("density ratio coefficients") {
  auto a = density_ratio_grad(5.0, 0.0, 1);
  CHECK(a.coef_y == 1.0);
  CHECK(a.coef_x == 0.0);
  auto b = density_ratio_grad(5.0, 3.0, 0);
  CHECK(b.coef_y == 0.0);
  CHECK(b.coef_x == 1.0);
  auto c = density_ratio_grad(0.0, std::log(2.0), 1);
  CHECK(c.coef_y == doctest::Approx(2.0).epsilon(1e-15));
  auto sat = density_ratio_grad(0.0, 1000.0, 1);
  CHECK(sat.saturated);
  CHECK(sat.coef_y == std::exp(30.0));
  CHECK_THROWS_AS(density_ratio_grad(0.0, 0.0, 2), InvalidArgument);
}

TEST_CASE("finite differences match smooth gradients") {
  for (const auto& spec : {make_loss(LossKind::logistic), multiclass_loss(3), make_loss(LossKind::square),
                           make_loss(LossKind::huber), make_loss(LossKind::kl_density_ratio)}) {
    const auto audit = finite_difference_audit(spec, 100, 3);
    CAPTURE(to_string(spec.kind));
    CHECK(audit.failures == 0);
    CHECK(audit.worst <= 1e-5);
  }
}

TEST_CASE("subgradient inequality for non-smooth losses") {
  for (const auto& spec : {make_loss(LossKind::hinge), make_loss(LossKind::squared_hinge),
                           eps_insensitive_loss(0.5), eps_insensitive_loss(0.0), quantile_loss(0.3),
                           make_loss(LossKind::novelty)}) {
    CAPTURE(to_string(spec.kind));
    CHECK(subgradient_audit(spec, 1000, 4).failures == 0);
  }
}

TEST_CASE("gradient bound M = 1 for hinge, quantile and eps-insensitive") {
  testing::for_all(200, 6, [](RandomStream& g) {
    const double u = g.uniform(-50, 50), y = g.sign();
    CHECK(std::abs(loss_grad(make_loss(LossKind::hinge), u, y)) <= 1.0);
    CHECK(std::abs(loss_grad(quantile_loss(g.uniform(0.01, 0.99)), u, y * 3)) <= 1.0);
    CHECK(std::abs(loss_grad(eps_insensitive_loss(g.uniform(0, 2)), u, y * 3)) <= 1.0);
  });
}
