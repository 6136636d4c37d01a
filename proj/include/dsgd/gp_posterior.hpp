#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dsgd/dataset.hpp"
#include "dsgd/features.hpp"
#include "dsgd/model.hpp"
#include "dsgd/trainer.hpp"

namespace dsgd {

/// Largest training set accepted by the dense solver.
inline constexpr std::size_t kMaxDenseGp = std::size_t{1} << 14;
/// Quadratic-memory cap on the operator recursion.
inline constexpr std::uint64_t kMaxOperatorSteps = 4096;

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Dense kernel matrix k(A_i, B_j).
Eigen::MatrixXd kernel_matrix(const KernelSpec& kernel, const Eigen::Ref<const RowMatrix>& A,
                              const Eigen::Ref<const RowMatrix>& B);

/// Exact GP regression posterior at Xstar via a Cholesky solve of K + s2 I.
Posterior closed_form_posterior(const Eigen::Ref<const RowMatrix>& X, const Eigen::VectorXd& y,
                                const Eigen::Ref<const RowMatrix>& Xstar, const KernelSpec& kernel,
                                double sigma2);

/// How nu is derived from the noise variance.
enum class GpNuRule : std::uint8_t {
  /// nu = s2 / n: minimizer of the mean square loss plus (nu/2)|f|^2 is
  /// exactly the posterior mean.
  sigma2_over_n,
  /// nu = 2 s2, the constant quoted alongside the update rule.
  two_sigma2,
};

double gp_nu(GpNuRule rule, double sigma2, std::size_t n);

/// Square-loss training with config.nu replaced by gp_nu(rule, ...).
Model ds_posterior_mean(const Dataset& data, TrainConfig config, const KernelSpec& kernel,
                        double sigma2, GpNuRule rule = GpNuRule::sigma2_over_n,
                        const CheckpointObserver& observer = {});

/// Doubly stochastic estimate of the variance operator
///   A(x, x') = sum_{i <= j} theta_ij phi_i(x) phi'_j(x')
/// with one feature per step from each of two independent streams.
/// theta is packed by column: column j (0-based) holds theta_0j..theta_jj.
struct VarianceOperatorState {
  KernelSpec kernel;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t t = 0;
  std::vector<double> theta;
  std::vector<FeatureBlock> omega;
  std::vector<FeatureBlock> omega_prime;

  VarianceOperatorState(const KernelSpec& k, std::size_t d, std::uint64_t base_seed);
  double at(std::size_t i, std::size_t j) const { return theta[j * (j + 1) / 2 + i]; }
  /// Numbers held in theta.
  std::size_t memory() const noexcept { return theta.size(); }
};

/// One step of the operator recursion at input x_t:
///   theta_ij <- (1 - s2 gamma / n) theta_ij          (i <= j < t)
///   theta_it  = -gamma sum_{j=i}^{t-1} theta_ij phi'_j(x_t) phi'_t(x_t)
///   theta_tt  = gamma phi_t(x_t) phi'_t(x_t)
/// where theta_ij on the right is the value before decay.
void ds_variance_operator_step(VarianceOperatorState& state, std::span<const double> x_t,
                               double gamma_t, double sigma2, std::size_t n);

/// A(x*, x*) at each row of Xstar.
Eigen::VectorXd operator_quadratic_form(const VarianceOperatorState& state,
                                        const Eigen::Ref<const RowMatrix>& Xstar);

/// Runs `steps` operator steps on points sampled uniformly from X with
/// gamma_t = theta / t.
VarianceOperatorState ds_variance_operator(const Eigen::Ref<const RowMatrix>& X,
                                           const KernelSpec& kernel, double sigma2, double theta,
                                           std::uint64_t steps, std::uint64_t seed);

/// Variance estimates clamped to [0, k(x*, x*)].
struct VarianceEstimate {
  Eigen::VectorXd variance;
  std::size_t clamped = 0;
};

/// k(x*, x*) - q clamped to the prior variance, counting clamps.
VarianceEstimate clamp_variance(const KernelSpec& kernel, const Eigen::Ref<const RowMatrix>& Xstar,
                                const Eigen::VectorXd& quadratic);

/// Targets for the per-test-point models: n x m matrix k(x_j, x*_i).
RowMatrix variance_targets(const KernelSpec& kernel, const Eigen::Ref<const RowMatrix>& X,
                           const Eigen::Ref<const RowMatrix>& Xstar);

/// One square-loss model per test point with targets k(x*_i, x_j), trained
/// jointly (they share feature and data streams); output i of the returned
/// model is f*_i.
Model ds_variance_testpoints(const Dataset& data, const Eigen::Ref<const RowMatrix>& Xstar,
                             TrainConfig config, const KernelSpec& kernel, double sigma2,
                             GpNuRule rule = GpNuRule::sigma2_over_n,
                             const CheckpointObserver& observer = {});

/// Variance at x*_i from the joint model: k(x*_i, x*_i) - f*_i(x*_i).
VarianceEstimate testpoint_variance(const Model& model, const Eigen::Ref<const RowMatrix>& Xstar);

}  // namespace dsgd
