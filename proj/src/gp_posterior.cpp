#include "dsgd/gp_posterior.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <string>

#include "dsgd/error.hpp"
#include "dsgd/predictor.hpp"
#include "dsgd/random_stream.hpp"

namespace dsgd {

namespace {

std::span<const double> row_of(const Eigen::Ref<const RowMatrix>& X, Eigen::Index i) {
  return {X.row(i).data(), static_cast<std::size_t>(X.cols())};
}

double feature_at(const FeatureBlock& block, const KernelSpec& kernel, std::span<const double> x) {
  const Eigen::Map<const RowMatrix> row(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  RowMatrix out(1, 1);
  featurize_into(block, kernel, row, out);
  return out(0, 0);
}

}  // namespace

Eigen::MatrixXd kernel_matrix(const KernelSpec& kernel, const Eigen::Ref<const RowMatrix>& A,
                              const Eigen::Ref<const RowMatrix>& B) {
  if (A.cols() != B.cols()) throw InvalidArgument("kernel_matrix: dimension mismatch");
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) K(i, j) = exact_kernel(kernel, row_of(A, i), row_of(B, j));
  }
  return K;
}

Posterior closed_form_posterior(const Eigen::Ref<const RowMatrix>& X, const Eigen::VectorXd& y,
                                const Eigen::Ref<const RowMatrix>& Xstar, const KernelSpec& kernel,
                                double sigma2) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("noise variance must be positive");
  const auto n = static_cast<std::size_t>(X.rows());
  if (n == 0) throw InvalidArgument("closed-form posterior needs at least one training point");
  if (n > kMaxDenseGp) {
    throw InvalidArgument("dense posterior limited to " + std::to_string(kMaxDenseGp) + " points");
  }
  if (y.size() != X.rows()) throw InvalidArgument("target count does not match inputs");
  if (Xstar.cols() != X.cols()) throw InvalidArgument("test points have the wrong dimension");

  Eigen::MatrixXd K = kernel_matrix(kernel, X, X);
  K.diagonal().array() += sigma2;
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw std::runtime_error("K + sigma2 I is not positive definite");
  const Eigen::MatrixXd Ks = kernel_matrix(kernel, Xstar, X);

  Posterior p;
  p.mean = Ks * llt.solve(y);
  const Eigen::MatrixXd V = llt.matrixL().solve(Ks.transpose());
  p.variance.resize(Xstar.rows());
  for (Eigen::Index i = 0; i < Xstar.rows(); ++i) {
    const double prior = exact_kernel(kernel, row_of(Xstar, i), row_of(Xstar, i));
    p.variance(i) = std::max(0.0, prior - V.col(i).squaredNorm());
  }
  return p;
}

double gp_nu(GpNuRule rule, double sigma2, std::size_t n) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("noise variance must be positive");
  if (n == 0) throw InvalidArgument("empty training set");
  return rule == GpNuRule::two_sigma2 ? 2.0 * sigma2 : sigma2 / static_cast<double>(n);
}

Model ds_posterior_mean(const Dataset& data, TrainConfig config, const KernelSpec& kernel,
                        double sigma2, GpNuRule rule, const CheckpointObserver& observer) {
  config.nu = gp_nu(rule, sigma2, data.size());
  return train(data, config, kernel, make_loss(LossKind::square), observer);
}

VarianceOperatorState::VarianceOperatorState(const KernelSpec& k, std::size_t d,
                                             std::uint64_t base_seed)
    : kernel(k), dim(d), seed(base_seed) {
  kernel.validate();
  if (d == 0) throw InvalidArgument("dimension must be positive");
}

void ds_variance_operator_step(VarianceOperatorState& state, std::span<const double> x_t,
                               double gamma_t, double sigma2, std::size_t n) {
  if (x_t.size() != state.dim) throw InvalidArgument("operator step: input has the wrong dimension");
  if (state.t >= kMaxOperatorSteps) {
    throw InvalidArgument("operator recursion is capped at " + std::to_string(kMaxOperatorSteps) +
                          " steps");
  }
  if (n == 0) throw InvalidArgument("operator step: n must be positive");
  const std::uint64_t t = state.t + 1;
  state.omega.push_back(sample_block(state.kernel, state.dim, 1, state.seed, t));
  state.omega_prime.push_back(
      sample_block(state.kernel, state.dim, 1, domain_key(state.seed, domains::kPrimed), t));

  const std::size_t prev = static_cast<std::size_t>(t - 1);
  std::vector<double> p(prev);
  for (std::size_t j = 0; j < prev; ++j) p[j] = feature_at(state.omega_prime[j], state.kernel, x_t);
  const double phi_t = feature_at(state.omega.back(), state.kernel, x_t);
  const double phi_prime_t = feature_at(state.omega_prime.back(), state.kernel, x_t);

  const double decay = 1.0 - sigma2 * gamma_t / static_cast<double>(n);
  std::vector<double> row_sum(prev, 0.0);
  for (std::size_t j = 0; j < prev; ++j) {
    double* col = state.theta.data() + j * (j + 1) / 2;
    for (std::size_t i = 0; i <= j; ++i) {
      row_sum[i] += col[i] * p[j];
      col[i] *= decay;
    }
  }
  for (std::size_t i = 0; i < prev; ++i) state.theta.push_back(-gamma_t * row_sum[i] * phi_prime_t);
  state.theta.push_back(gamma_t * phi_t * phi_prime_t);
  state.t = t;
}

Eigen::VectorXd operator_quadratic_form(const VarianceOperatorState& state,
                                        const Eigen::Ref<const RowMatrix>& Xstar) {
  if (static_cast<std::size_t>(Xstar.cols()) != state.dim) {
    throw InvalidArgument("test points have the wrong dimension");
  }
  const std::size_t t = static_cast<std::size_t>(state.t);
  Eigen::VectorXd q(Xstar.rows());
  std::vector<double> a(t), b(t);
  for (Eigen::Index m = 0; m < Xstar.rows(); ++m) {
    const auto x = row_of(Xstar, m);
    for (std::size_t i = 0; i < t; ++i) {
      a[i] = feature_at(state.omega[i], state.kernel, x);
      b[i] = feature_at(state.omega_prime[i], state.kernel, x);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      const double* col = state.theta.data() + j * (j + 1) / 2;
      double s = 0.0;
      for (std::size_t i = 0; i <= j; ++i) s += col[i] * a[i];
      total += s * b[j];
    }
    q(m) = total;
  }
  return q;
}

VarianceOperatorState ds_variance_operator(const Eigen::Ref<const RowMatrix>& X,
                                           const KernelSpec& kernel, double sigma2, double theta,
                                           std::uint64_t steps, std::uint64_t seed) {
  if (X.rows() == 0) throw InvalidArgument("training data is empty");
  if (!(theta > 0.0)) throw InvalidArgument("theta must be positive");
  VarianceOperatorState state(kernel, static_cast<std::size_t>(X.cols()), seed);
  const auto n = static_cast<std::size_t>(X.rows());
  const std::uint64_t data_key = domain_key(seed, domains::kDataSampling);
  for (std::uint64_t t = 1; t <= steps; ++t) {
    RandomStream stream = derive_stream(data_key, t);
    const auto row = static_cast<Eigen::Index>(stream.below(n));
    ds_variance_operator_step(state, row_of(X, row), theta / static_cast<double>(t), sigma2, n);
  }
  return state;
}

VarianceEstimate clamp_variance(const KernelSpec& kernel, const Eigen::Ref<const RowMatrix>& Xstar,
                                const Eigen::VectorXd& quadratic) {
  if (quadratic.size() != Xstar.rows()) throw InvalidArgument("one value per test point expected");
  VarianceEstimate est;
  est.variance.resize(Xstar.rows());
  for (Eigen::Index i = 0; i < Xstar.rows(); ++i) {
    const double prior = exact_kernel(kernel, row_of(Xstar, i), row_of(Xstar, i));
    const double v = prior - quadratic(i);
    const double c = std::clamp(v, 0.0, prior);
    if (c != v) ++est.clamped;
    est.variance(i) = c;
  }
  return est;
}

RowMatrix variance_targets(const KernelSpec& kernel, const Eigen::Ref<const RowMatrix>& X,
                           const Eigen::Ref<const RowMatrix>& Xstar) {
  if (X.cols() != Xstar.cols()) throw InvalidArgument("test points have the wrong dimension");
  RowMatrix T(X.rows(), Xstar.rows());
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    for (Eigen::Index i = 0; i < Xstar.rows(); ++i) T(j, i) = exact_kernel(kernel, row_of(X, j), row_of(Xstar, i));
  }
  return T;
}

Model ds_variance_testpoints(const Dataset& data, const Eigen::Ref<const RowMatrix>& Xstar,
                             TrainConfig config, const KernelSpec& kernel, double sigma2,
                             GpNuRule rule, const CheckpointObserver& observer) {
  if (Xstar.rows() == 0) throw InvalidArgument("no test points");
  config.nu = gp_nu(rule, sigma2, data.size());
  Trainer trainer(data.X, variance_targets(kernel, data.X, Xstar), config, kernel);
  trainer.run(observer);
  return trainer.finish();
}

VarianceEstimate testpoint_variance(const Model& model, const Eigen::Ref<const RowMatrix>& Xstar) {
  if (static_cast<std::size_t>(Xstar.rows()) != model.outputs) {
    throw InvalidArgument("model has " + std::to_string(model.outputs) + " outputs but " +
                          std::to_string(Xstar.rows()) + " test points were given");
  }
  const RowMatrix f = predict(model, Xstar);
  return clamp_variance(model.kernel, Xstar, f.diagonal());
}

}  // namespace dsgd
