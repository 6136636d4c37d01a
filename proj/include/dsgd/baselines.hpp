#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dsgd/dataset.hpp"
#include "dsgd/features.hpp"
#include "dsgd/trainer.hpp"

namespace dsgd {

/// Support-vector model from exact-kernel functional SGD.
/// f(x) = scale * sum_i coef_i k(sv_i, x).
struct NormaModel {
  KernelSpec kernel;
  LossSpec loss;
  std::size_t dim = 0;
  double theta = 1.0;
  double nu = 1.0;
  std::uint64_t iterations = 0;
  double scale = 1.0;
  /// Sampled points, row-major, one per stored coefficient.
  std::vector<double> points;
  std::vector<double> coefficients;

  std::size_t support_size() const noexcept { return coefficients.size(); }
  /// Stored numbers: support_size() * (dim + 1).
  std::size_t memory() const noexcept { return points.size() + coefficients.size(); }
};

Eigen::VectorXd predict(const NormaModel& model, const Eigen::Ref<const RowMatrix>& X);

/// NORMA: the trainer's schedule, batching, sampling and decay with exact
/// kernel evaluations in place of random features. Single-output supervised
/// losses only.
class NormaTrainer {
 public:
  NormaTrainer(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
               const LossSpec& loss);

  void step();
  void step(std::span<const std::size_t> batch);
  void run();
  std::uint64_t iteration() const noexcept { return model_.iterations; }
  const NormaModel& model() const noexcept { return model_; }
  const Eigen::VectorXd& last_batch_scores() const noexcept { return batch_scores_; }

 private:
  RowMatrix X_;
  std::vector<double> y_;
  TrainConfig config_;
  NormaModel model_;
  bool use_cache_ = false;
  Eigen::VectorXd cache_raw_;
  Eigen::VectorXd batch_scores_;
};

NormaModel norma_train(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
                       const LossSpec& loss);

/// Linear model over one fixed block of R random features (block index 1 of
/// the feature stream).
struct PegasosModel {
  KernelSpec kernel;
  LossSpec loss;
  std::size_t dim = 0;
  std::size_t features = 0;
  std::uint64_t base_seed = 0;
  std::uint64_t iterations = 0;
  /// outputs x features, row-major.
  std::vector<double> weights;

  std::size_t outputs() const noexcept { return loss.outputs(); }
  std::size_t memory() const noexcept { return weights.size(); }
};

RowMatrix predict(const PegasosModel& model, const Eigen::Ref<const RowMatrix>& X);

/// r-Pegasos: SGD with gamma_t = theta / t on the fixed features; hinge loss
/// adds projection onto the ball of radius 1 / sqrt(nu).
class PegasosTrainer {
 public:
  PegasosTrainer(const Dataset& data, std::size_t features, const TrainConfig& config,
                 const KernelSpec& kernel, const LossSpec& loss);

  void step();
  void step(std::span<const std::size_t> batch);
  void run();
  std::uint64_t iteration() const noexcept { return model_.iterations; }
  const PegasosModel& model() const noexcept { return model_; }

 private:
  RowMatrix X_;
  std::vector<double> y_;
  TrainConfig config_;
  double theta_ = 1.0;
  FeatureBlock block_;
  PegasosModel model_;
};

PegasosModel rpegasos_train(const Dataset& data, std::size_t features, const TrainConfig& config,
                            const KernelSpec& kernel, const LossSpec& loss);

/// Uniform stepping interface used by the benchmark harness.
class Solver {
 public:
  virtual ~Solver() = default;
  virtual std::string name() const = 0;
  virtual void step() = 0;
  virtual std::uint64_t iteration() const = 0;
  /// Scores, rows(X) x outputs.
  virtual RowMatrix predict(const Eigen::Ref<const RowMatrix>& X) const = 0;
  /// Coefficient numbers held by the model (not process memory).
  virtual std::size_t coefficient_memory() const = 0;
};

/// name is one of dsgd, norma, rpegasos. `pegasos_features` sizes r-Pegasos.
std::unique_ptr<Solver> make_solver(const std::string& name, const Dataset& data,
                                    const TrainConfig& config, const KernelSpec& kernel,
                                    const LossSpec& loss, std::size_t pegasos_features);

}  // namespace dsgd
