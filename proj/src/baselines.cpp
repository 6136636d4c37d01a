#include "dsgd/baselines.hpp"

#include <cmath>
#include <string>

#include "dsgd/error.hpp"
#include "dsgd/predictor.hpp"

namespace dsgd {

namespace {

constexpr double kFoldThreshold = 1e-12;

std::span<const double> row_of(const Eigen::Ref<const RowMatrix>& X, Eigen::Index i) {
  return {X.row(i).data(), static_cast<std::size_t>(X.cols())};
}

void check_supervised(const Dataset& data, const LossSpec& loss, const char* solver) {
  loss.validate();
  if (data.size() == 0) throw InvalidArgument("training data is empty");
  if (data.y.size() != data.size()) throw DataError("training data has mismatched targets");
  if (loss.kind == LossKind::novelty || loss.kind == LossKind::kl_density_ratio) {
    throw InvalidArgument(std::string(solver) + " supports supervised losses only");
  }
  for (std::size_t i = 0; i < data.y.size(); ++i) {
    try {
      check_target(loss, data.y[i]);
    } catch (const InvalidArgument& e) {
      throw DataError("row " + std::to_string(i) + ": " + e.what());
    }
  }
}

}  // namespace

Eigen::VectorXd predict(const NormaModel& model, const Eigen::Ref<const RowMatrix>& X) {
  if (static_cast<std::size_t>(X.cols()) != model.dim) {
    throw DataError("input has " + std::to_string(X.cols()) + " features but the model expects " +
                    std::to_string(model.dim));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
  const std::size_t d = model.dim;
  for (Eigen::Index m = 0; m < X.rows(); ++m) {
    const auto x = row_of(X, m);
    double s = 0.0;
    for (std::size_t i = 0; i < model.support_size(); ++i) {
      s += model.coefficients[i] * exact_kernel(model.kernel, {model.points.data() + i * d, d}, x);
    }
    out(m) = model.scale * s;
  }
  return out;
}

NormaTrainer::NormaTrainer(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
                           const LossSpec& loss) {
  check_supervised(data, loss, "NORMA");
  if (loss.outputs() != 1) throw InvalidArgument("NORMA supports single-output losses only");
  config.validate();
  kernel.validate();
  X_ = data.X;
  y_ = data.y;
  config_ = config;
  model_.kernel = kernel;
  model_.loss = loss;
  model_.dim = static_cast<std::size_t>(X_.cols());
  model_.theta = config.step_theta();
  model_.nu = config.nu;
  const std::size_t n = data.size();
  switch (config.strategy) {
    case EvalStrategy::cached: use_cache_ = true; break;
    case EvalStrategy::recompute: use_cache_ = false; break;
    case EvalStrategy::automatic: use_cache_ = n <= config.batch_size * config.iterations; break;
  }
  if (use_cache_) cache_raw_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
}

void NormaTrainer::step() {
  const auto batch = uniform_batch(config_.base_seed, model_.iterations + 1,
                                   static_cast<std::size_t>(X_.rows()), config_.batch_size);
  step(batch);
}

void NormaTrainer::step(std::span<const std::size_t> batch) {
  if (batch.empty()) throw InvalidArgument("batch must not be empty");
  const std::size_t n = static_cast<std::size_t>(X_.rows());
  for (std::size_t row : batch) {
    if (row >= n) throw InvalidArgument("batch row out of range");
  }
  const std::size_t d = model_.dim;
  const std::size_t B = batch.size();
  const std::uint64_t t = model_.iterations + 1;
  const double gamma = model_.theta / static_cast<double>(t);

  batch_scores_.resize(static_cast<Eigen::Index>(B));
  for (std::size_t b = 0; b < B; ++b) {
    const auto x = row_of(X_, static_cast<Eigen::Index>(batch[b]));
    double raw;
    if (use_cache_) {
      raw = cache_raw_(static_cast<Eigen::Index>(batch[b]));
    } else {
      raw = 0.0;
      for (std::size_t i = 0; i < model_.support_size(); ++i) {
        raw += model_.coefficients[i] * exact_kernel(model_.kernel, {model_.points.data() + i * d, d}, x);
      }
    }
    batch_scores_(static_cast<Eigen::Index>(b)) = model_.scale * raw;
  }
  if (!batch_scores_.allFinite()) {
    throw DivergenceError(t, "non-finite prediction at iteration " + std::to_string(t));
  }

  std::vector<double> alpha(B);
  for (std::size_t b = 0; b < B; ++b) {
    alpha[b] = -gamma * loss_grad(model_.loss, batch_scores_(static_cast<Eigen::Index>(b)), y_[batch[b]]) /
               static_cast<double>(B);
  }

  const double new_scale = model_.scale * (1.0 - gamma * model_.nu);
  if (new_scale == 0.0 || std::abs(new_scale) < kFoldThreshold) {
    for (double& c : model_.coefficients) c *= new_scale;
    if (use_cache_) cache_raw_ *= new_scale;
    model_.scale = 1.0;
  } else {
    model_.scale = new_scale;
  }

  std::vector<double> stored(B);
  for (std::size_t b = 0; b < B; ++b) {
    stored[b] = alpha[b] / model_.scale;
    model_.coefficients.push_back(stored[b]);
    const auto x = row_of(X_, static_cast<Eigen::Index>(batch[b]));
    model_.points.insert(model_.points.end(), x.begin(), x.end());
  }
  model_.iterations = t;

  if (use_cache_) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = row_of(X_, static_cast<Eigen::Index>(i));
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        s += stored[b] * exact_kernel(model_.kernel, row_of(X_, static_cast<Eigen::Index>(batch[b])), xi);
      }
      cache_raw_(static_cast<Eigen::Index>(i)) += s;
    }
  }
}

void NormaTrainer::run() {
  while (model_.iterations < config_.iterations) step();
}

NormaModel norma_train(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
                       const LossSpec& loss) {
  NormaTrainer trainer(data, config, kernel, loss);
  trainer.run();
  return trainer.model();
}

RowMatrix predict(const PegasosModel& model, const Eigen::Ref<const RowMatrix>& X) {
  if (static_cast<std::size_t>(X.cols()) != model.dim) {
    throw DataError("input has " + std::to_string(X.cols()) + " features but the model expects " +
                    std::to_string(model.dim));
  }
  const std::size_t K = model.outputs();
  RowMatrix out = RowMatrix::Zero(X.rows(), static_cast<Eigen::Index>(K));
  if (model.features == 0 || X.rows() == 0) return out;
  const FeatureBlock block = sample_block(model.kernel, model.dim, model.features, model.base_seed, 1);
  const RowMatrix phi = featurize(block, model.kernel, X);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < model.features; ++j) {
        s += phi(i, static_cast<Eigen::Index>(j)) * model.weights[k * model.features + j];
      }
      out(i, static_cast<Eigen::Index>(k)) = s;
    }
  }
  return out;
}

PegasosTrainer::PegasosTrainer(const Dataset& data, std::size_t features, const TrainConfig& config,
                               const KernelSpec& kernel, const LossSpec& loss) {
  check_supervised(data, loss, "r-Pegasos");
  config.validate();
  if (features < 1) throw InvalidArgument("r-Pegasos needs at least one feature");
  X_ = data.X;
  y_ = data.y;
  config_ = config;
  theta_ = config.step_theta();
  model_.kernel = kernel;
  model_.loss = loss;
  model_.dim = static_cast<std::size_t>(X_.cols());
  model_.features = features;
  model_.base_seed = config.base_seed;
  model_.weights.assign(loss.outputs() * features, 0.0);
  block_ = sample_block(kernel, model_.dim, features, config.base_seed, 1);
}

void PegasosTrainer::step() {
  const auto batch = uniform_batch(config_.base_seed, model_.iterations + 1,
                                   static_cast<std::size_t>(X_.rows()), config_.batch_size);
  step(batch);
}

void PegasosTrainer::step(std::span<const std::size_t> batch) {
  if (batch.empty()) throw InvalidArgument("batch must not be empty");
  const std::size_t B = batch.size();
  const std::size_t K = model_.outputs();
  const std::size_t R = model_.features;
  const std::uint64_t t = model_.iterations + 1;
  const double gamma = theta_ / static_cast<double>(t);

  RowMatrix xb(static_cast<Eigen::Index>(B), X_.cols());
  for (std::size_t b = 0; b < B; ++b) {
    if (batch[b] >= static_cast<std::size_t>(X_.rows())) throw InvalidArgument("batch row out of range");
    xb.row(static_cast<Eigen::Index>(b)) = X_.row(static_cast<Eigen::Index>(batch[b]));
  }
  const RowMatrix phi = featurize(block_, model_.kernel, xb);

  std::vector<double> grad(K * R, 0.0);
  std::vector<double> u(K), g(K);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < R; ++j) s += phi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) * model_.weights[k * R + j];
      u[k] = s;
    }
    for (double v : u) {
      if (!std::isfinite(v)) throw DivergenceError(t, "non-finite prediction at iteration " + std::to_string(t));
    }
    loss_grad(model_.loss, u, y_[batch[b]], g);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < R; ++j) grad[k * R + j] += g[k] * phi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
    }
  }
  const double decay = 1.0 - gamma * config_.nu;
  const double step = gamma / static_cast<double>(B);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    model_.weights[i] = decay * model_.weights[i] - step * grad[i];
    norm2 += model_.weights[i] * model_.weights[i];
  }
  if (model_.loss.kind == LossKind::hinge && config_.nu > 0.0) {
    const double radius = 1.0 / std::sqrt(config_.nu);
    const double norm = std::sqrt(norm2);
    if (norm > radius) {
      for (double& w : model_.weights) w *= radius / norm;
    }
  }
  model_.iterations = t;
}

void PegasosTrainer::run() {
  while (model_.iterations < config_.iterations) step();
}

PegasosModel rpegasos_train(const Dataset& data, std::size_t features, const TrainConfig& config,
                            const KernelSpec& kernel, const LossSpec& loss) {
  PegasosTrainer trainer(data, features, config, kernel, loss);
  trainer.run();
  return trainer.model();
}

namespace {

class DsgdSolver final : public Solver {
 public:
  DsgdSolver(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
             const LossSpec& loss)
      : trainer_(data, config, kernel, loss) {}
  std::string name() const override { return "dsgd"; }
  void step() override { trainer_.step(); }
  std::uint64_t iteration() const override { return trainer_.iteration(); }
  RowMatrix predict(const Eigen::Ref<const RowMatrix>& X) const override {
    return dsgd::predict(trainer_.model(), X);
  }
  std::size_t coefficient_memory() const override { return trainer_.model().coefficient_count(); }

 private:
  Trainer trainer_;
};

class NormaSolver final : public Solver {
 public:
  NormaSolver(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
              const LossSpec& loss)
      : trainer_(data, config, kernel, loss) {}
  std::string name() const override { return "norma"; }
  void step() override { trainer_.step(); }
  std::uint64_t iteration() const override { return trainer_.iteration(); }
  RowMatrix predict(const Eigen::Ref<const RowMatrix>& X) const override {
    return dsgd::predict(trainer_.model(), X);
  }
  std::size_t coefficient_memory() const override { return trainer_.model().memory(); }

 private:
  NormaTrainer trainer_;
};

class PegasosSolver final : public Solver {
 public:
  PegasosSolver(const Dataset& data, std::size_t features, const TrainConfig& config,
                const KernelSpec& kernel, const LossSpec& loss)
      : trainer_(data, features, config, kernel, loss) {}
  std::string name() const override { return "rpegasos"; }
  void step() override { trainer_.step(); }
  std::uint64_t iteration() const override { return trainer_.iteration(); }
  RowMatrix predict(const Eigen::Ref<const RowMatrix>& X) const override {
    return dsgd::predict(trainer_.model(), X);
  }
  std::size_t coefficient_memory() const override { return trainer_.model().memory(); }

 private:
  PegasosTrainer trainer_;
};

}  // namespace

std::unique_ptr<Solver> make_solver(const std::string& name, const Dataset& data,
                                    const TrainConfig& config, const KernelSpec& kernel,
                                    const LossSpec& loss, std::size_t pegasos_features) {
  if (name == "dsgd") return std::make_unique<DsgdSolver>(data, config, kernel, loss);
  if (name == "norma") return std::make_unique<NormaSolver>(data, config, kernel, loss);
  if (name == "rpegasos") {
    return std::make_unique<PegasosSolver>(data, pegasos_features, config, kernel, loss);
  }
  throw InvalidArgument("unknown solver '" + name + "' (expected dsgd, norma or rpegasos)");
}

}  // namespace dsgd
