#include "dsgd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsgd/error.hpp"
#include "dsgd/parallel.hpp"
#include "dsgd/random_stream.hpp"

namespace dsgd {

namespace {

constexpr double kFoldThreshold = 1e-12;
constexpr std::size_t kCacheChunkRows = 1024;
constexpr std::size_t kMaxCachedNumbers = std::size_t{1} << 25;

}  // namespace

void TrainConfig::validate() const {
  if (!(nu >= 0.0 && std::isfinite(nu))) throw InvalidArgument("nu must be finite and >= 0");
  if (theta) {
    if (!(*theta > 0.0 && std::isfinite(*theta))) throw InvalidArgument("theta must be positive");
  } else if (nu == 0.0) {
    throw InvalidArgument("theta must be given explicitly when nu = 0");
  }
  if (batch_size < 1) throw InvalidArgument("batch size must be positive");
  if (block_size < 1) throw InvalidArgument("block size must be positive");
  for (std::size_t i = 0; i < eval_schedule.size(); ++i) {
    if (eval_schedule[i] > iterations) {
      throw InvalidArgument("checkpoint " + std::to_string(eval_schedule[i]) +
                            " exceeds the iteration budget");
    }
    if (i > 0 && eval_schedule[i] <= eval_schedule[i - 1]) {
      throw InvalidArgument("checkpoints must be strictly ascending");
    }
  }
}

std::vector<double> coefficient_weights(std::uint64_t t, double theta, double nu) {
  if (t < 1) throw InvalidArgument("coefficient_weights requires t >= 1");
  std::vector<double> a(t);
  double prod = 1.0;
  for (std::uint64_t i = t; i >= 1; --i) {
    a[i - 1] = -(theta / static_cast<double>(i)) * prod;
    prod *= 1.0 - theta * nu / static_cast<double>(i);
  }
  return a;
}

std::vector<std::size_t> uniform_batch(std::uint64_t base_seed, std::uint64_t iteration,
                                       std::size_t n, std::size_t batch_size) {
  if (n == 0) throw InvalidArgument("cannot sample from an empty data set");
  RandomStream stream = derive_stream(domain_key(base_seed, domains::kDataSampling), iteration);
  std::vector<std::size_t> batch(batch_size);
  for (auto& row : batch) row = stream.below(n);
  return batch;
}

Trainer::Trainer(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
                 const LossSpec& loss) {
  loss.validate();
  if (data.size() == 0) throw InvalidArgument("training data is empty");
  if (data.y.size() != data.size()) throw DataError("training data has mismatched targets");
  X_ = data.X;
  y_ = data.y;
  if (loss.kind != LossKind::novelty) {
    for (std::size_t i = 0; i < y_.size(); ++i) {
      try {
        check_target(loss, y_[i]);
      } catch (const InvalidArgument& e) {
        throw DataError("row " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  if (loss.kind == LossKind::kl_density_ratio) {
    for (std::size_t i = 0; i < y_.size(); ++i) (y_[i] == 1.0 ? class1_rows_ : class0_rows_).push_back(i);
    if (class0_rows_.empty() || class1_rows_.empty()) {
      throw DataError("density-ratio training needs samples labelled 0 and 1");
    }
  }
  init(config, kernel, loss);
}

Trainer::Trainer(const RowMatrix& X, const RowMatrix& targets, const TrainConfig& config,
                 const KernelSpec& kernel) {
  if (X.rows() == 0) throw InvalidArgument("training data is empty");
  if (targets.rows() != X.rows() || targets.cols() < 1) {
    throw InvalidArgument("target matrix must have one row per input and at least one column");
  }
  X_ = X;
  targets_ = targets;
  multi_target_ = true;
  init(config, kernel, make_loss(LossKind::square));
}

void Trainer::init(const TrainConfig& config, const KernelSpec& kernel, const LossSpec& loss) {
  config.validate();
  kernel.validate();
  if (!X_.allFinite()) throw DataError("training inputs contain non-finite values");
  if (kernel.family == KernelFamily::linear && config.block_size != static_cast<std::size_t>(X_.cols())) {
    throw InvalidArgument("linear kernel requires block size equal to the input dimension");
  }
  config_ = config;
  theta_ = config.step_theta();

  model_.kernel = kernel;
  model_.loss = loss;
  model_.dim = static_cast<std::size_t>(X_.cols());
  model_.outputs = multi_target_ ? static_cast<std::size_t>(targets_.cols()) : loss.outputs();
  model_.base_seed = config.base_seed;
  model_.theta = theta_;
  model_.nu = config.nu;
  model_.block_size = config.block_size;
  model_.averaging_enabled = config.averaging;
  if (loss.kind == LossKind::novelty) model_.tau = 0.0;
  // Open-ended runs (time budgets) pass a huge T; grow on demand past this.
  constexpr std::uint64_t kMaxReserve = std::uint64_t{1} << 24;
  model_.coefficients.reserve(
      static_cast<std::size_t>(std::min<std::uint64_t>(config.iterations, kMaxReserve / model_.block_stride() + 1) *
                               model_.block_stride()));

  const std::size_t n = static_cast<std::size_t>(X_.rows());
  switch (config.strategy) {
    case EvalStrategy::cached:
      use_cache_ = true;
      break;
    case EvalStrategy::recompute:
      use_cache_ = false;
      break;
    case EvalStrategy::automatic:
      use_cache_ = n <= config.batch_size * config.iterations &&
                   n * model_.outputs <= kMaxCachedNumbers;
      break;
  }
  if (use_cache_) {
    data_cache_.X = X_;
    data_cache_.raw = RowMatrix::Zero(X_.rows(), static_cast<Eigen::Index>(model_.outputs));
  }
  batch_X_.resize(static_cast<Eigen::Index>(config.batch_size), X_.cols());
  batch_scores_.resize(static_cast<Eigen::Index>(config.batch_size),
                       static_cast<Eigen::Index>(model_.outputs));
  start_ = std::chrono::steady_clock::now();
}

std::vector<std::size_t> Trainer::sample_batch(std::uint64_t iteration) const {
  const std::size_t n = static_cast<std::size_t>(X_.rows());
  if (model_.loss.kind != LossKind::kl_density_ratio || multi_target_) {
    return uniform_batch(config_.base_seed, iteration, n, config_.batch_size);
  }
  // Density ratio: z ~ Bernoulli(0.5) picks which distribution to sample.
  RandomStream stream = derive_stream(domain_key(config_.base_seed, domains::kDataSampling), iteration);
  std::vector<std::size_t> batch(config_.batch_size);
  for (auto& row : batch) {
    const auto& pool = stream.bernoulli(0.5) ? class1_rows_ : class0_rows_;
    row = pool[stream.below(pool.size())];
  }
  return batch;
}

void Trainer::step() {
  const auto batch = sample_batch(model_.iterations + 1);
  step(batch);
}

void Trainer::evaluate_batch(std::span<const std::size_t> batch) {
  const std::size_t B = batch.size();
  const std::size_t K = model_.outputs;
  batch_X_.resize(static_cast<Eigen::Index>(B), X_.cols());
  batch_scores_.resize(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(K));
  for (std::size_t b = 0; b < B; ++b) {
    batch_X_.row(static_cast<Eigen::Index>(b)) = X_.row(static_cast<Eigen::Index>(batch[b]));
  }
  if (use_cache_) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < K; ++k) {
        batch_scores_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) =
            model_.scale * data_cache_.raw(static_cast<Eigen::Index>(batch[b]), static_cast<Eigen::Index>(k));
      }
    }
  } else {
    batch_scores_.setZero();
    accumulate_block_scores(model_.kernel, model_.dim, model_.block_size, K, model_.base_seed,
                            model_.coefficients, static_cast<std::size_t>(model_.iterations),
                            batch_X_, batch_scores_, &block_cache_);
    batch_scores_ *= model_.scale;
  }
}

void Trainer::step(std::span<const std::size_t> batch) {
  if (batch.empty()) throw InvalidArgument("batch must not be empty");
  for (std::size_t row : batch) {
    if (row >= static_cast<std::size_t>(X_.rows())) throw InvalidArgument("batch row out of range");
  }
  const std::uint64_t t = model_.iterations + 1;
  const double gamma = theta_ / static_cast<double>(t);
  const std::size_t B = batch.size();
  const std::size_t K = model_.outputs;
  const std::size_t r = model_.block_size;
  const LossSpec& loss = model_.loss;

  evaluate_batch(batch);
  if (!batch_scores_.allFinite()) {
    throw DivergenceError(t, "non-finite prediction at iteration " + std::to_string(t) +
                                 " (step size theta=" + format_double(theta_) + " too large?)");
  }

  // Per-point gradients of the loss at the pre-update scores.
  RowMatrix grads(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(K));
  double multiplier = 1.0;
  double loss_sum = 0.0;
  double tau_shift = 0.0;
  const double tau_prev = model_.tau.value_or(0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    std::span<const double> u(batch_scores_.row(bi).data(), K);
    std::span<double> g(grads.row(bi).data(), K);
    if (multi_target_) {
      for (std::size_t k = 0; k < K; ++k) {
        const double diff = u[k] - targets_(static_cast<Eigen::Index>(batch[b]), static_cast<Eigen::Index>(k));
        g[k] = diff;
        loss_sum += 0.5 * diff * diff;
      }
      continue;
    }
    const double y = y_[batch[b]];
    switch (loss.kind) {
      case LossKind::novelty: {
        const NoveltyStep ns = novelty_grads(u[0], tau_prev);
        g[0] = -static_cast<double>(ns.alpha_sign);
        tau_shift += ns.tau_direction == TauStep::up ? gamma * config_.nu : -gamma * (1.0 - config_.nu);
        loss_sum += loss_value(loss, u[0], tau_prev);
        break;
      }
      case LossKind::kl_density_ratio: {
        const int z = y == 1.0 ? 1 : 0;
        const DensityRatioCoefs c = density_ratio_grad(u[0], u[0], z);
        if (c.saturated) ++saturations_;
        // Coefficient of phi at the selected sample: exp(f(y)) or -1.
        g[0] = z == 1 ? c.coef_y : -c.coef_x;
        multiplier = 2.0;
        loss_sum += loss_value(loss, u[0], y);
        break;
      }
      default:
        loss_grad(loss, u, y, g);
        loss_sum += loss_value(loss, u, y);
        break;
    }
  }
  batch_loss_ = loss_sum / static_cast<double>(B);

  // New block and its coefficients alpha (K x r).
  const FeatureBlock* block_ptr = nullptr;
  FeatureBlock fresh;
  if (use_cache_) {
    fresh = sample_block(model_.kernel, model_.dim, r, model_.base_seed, t);
    block_ptr = &fresh;
  } else {
    block_ptr = &block_cache_.get(model_.kernel, model_.dim, r, model_.base_seed, t);
  }
  const FeatureBlock& block = *block_ptr;
  const RowMatrix phi = featurize(block, model_.kernel, batch_X_);
  std::vector<double> alpha(K * r);
  const double step = -gamma * multiplier / static_cast<double>(B);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        s += grads(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) *
             phi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
      }
      alpha[k * r + j] = step * s;
    }
  }
  if (model_.tau) model_.tau = tau_prev + tau_shift / static_cast<double>(B);

  // Decay every earlier block by (1 - gamma nu) through the global scale.
  const double factor = 1.0 - gamma * config_.nu;
  const double new_scale = model_.scale * factor;
  if (model_.iterations > 0 && (new_scale == 0.0 || std::abs(new_scale) < kFoldThreshold)) {
    materialize_averages();
    rescale_storage(new_scale);
    if (new_scale == 0.0) {
      ++resets_;
    } else {
      ++folds_;
    }
    model_.scale = 1.0;
  } else if (new_scale == 0.0 || std::abs(new_scale) < kFoldThreshold) {
    model_.scale = 1.0;  // nothing stored yet
  } else {
    model_.scale = new_scale;
  }

  std::vector<double> stored(K * r);
  for (std::size_t i = 0; i < stored.size(); ++i) stored[i] = alpha[i] / model_.scale;
  model_.coefficients.insert(model_.coefficients.end(), stored.begin(), stored.end());
  model_.iterations = t;

  if (use_cache_) {
    add_block_to(data_cache_, block, stored);
  }
  for (auto& set : tracked_) add_block_to(set, block, stored);

  if (config_.averaging) {
    // Long prefix sums against a small current scale lose digits on subtraction.
    if (std::abs(scale_sum_) > std::max(1024.0, static_cast<double>(t)) * std::abs(model_.scale)) {
      materialize_averages();
    }
    avg_start_.push_back(scale_sum_);
    scale_sum_ += model_.scale;
    for (auto& set : tracked_) set.averaged_sum += model_.scale * set.raw;
  }
}

void Trainer::add_block_to(PointSet& set, const FeatureBlock& block, std::span<const double> stored) {
  const std::size_t K = model_.outputs;
  const std::size_t r = model_.block_size;
  const std::size_t n = static_cast<std::size_t>(set.X.rows());
  std::vector<double> coef_t(K > 1 ? stored.size() : 0);
  if (K > 1) detail::transpose_block(stored.data(), r, K, coef_t.data());
  parallel_for(n, kCacheChunkRows, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scratch(K);
    for (std::size_t c0 = begin; c0 < end; c0 += kCacheChunkRows) {
      const std::size_t c1 = std::min(end, c0 + kCacheChunkRows);
      const auto rows = static_cast<Eigen::Index>(c1 - c0);
      const RowMatrix phi = featurize(block, model_.kernel, set.X.middleRows(static_cast<Eigen::Index>(c0), rows));
      for (Eigen::Index i = 0; i < rows; ++i) {
        detail::add_scores(phi.row(i).data(), stored.data(), coef_t.data(), r, K,
                           set.raw.row(static_cast<Eigen::Index>(c0) + i).data(), scratch.data());
      }
    }
  });
}

void Trainer::materialize_averages() {
  if (!config_.averaging || model_.iterations == 0) return;
  const std::size_t stride = model_.block_stride();
  avg_base_.resize(model_.coefficients.size(), 0.0);
  for (std::size_t s = 0; s < avg_start_.size(); ++s) {
    const double w = scale_sum_ - avg_start_[s];
    for (std::size_t i = s * stride; i < (s + 1) * stride; ++i) {
      avg_base_[i] += model_.coefficients[i] * w;
    }
    avg_start_[s] = 0.0;
  }
  scale_sum_ = 0.0;
}

void Trainer::rescale_storage(double factor) {
  for (double& c : model_.coefficients) c *= factor;
  if (use_cache_) data_cache_.raw *= factor;
  for (auto& set : tracked_) set.raw *= factor;
}

Model Trainer::snapshot() const {
  Model m = model_;
  if (config_.averaging && model_.iterations > 0) {
    const std::size_t stride = model_.block_stride();
    m.averaged.assign(model_.coefficients.size(), 0.0);
    const double inv_t = 1.0 / static_cast<double>(model_.iterations);
    for (std::size_t s = 0; s < avg_start_.size(); ++s) {
      const double w = scale_sum_ - avg_start_[s];
      for (std::size_t i = s * stride; i < (s + 1) * stride; ++i) {
        const double base = i < avg_base_.size() ? avg_base_[i] : 0.0;
        m.averaged[i] = (base + model_.coefficients[i] * w) * inv_t;
      }
    }
  }
  return m;
}

Model Trainer::finish() {
  Model m = snapshot();
  model_ = Model{};
  return m;
}

void Trainer::run(const CheckpointObserver& observer) {
  auto next = config_.eval_schedule.begin();
  while (next != config_.eval_schedule.end() && *next <= model_.iterations) ++next;
  while (model_.iterations < config_.iterations) {
    step();
    if (next != config_.eval_schedule.end() && *next == model_.iterations) {
      if (observer) observer(*this);
      ++next;
    }
  }
}

std::size_t Trainer::track(const RowMatrix& points) {
  if (points.cols() != X_.cols()) {
    throw InvalidArgument("tracked points have dimension " + std::to_string(points.cols()) +
                          ", expected " + std::to_string(X_.cols()));
  }
  PointSet set;
  set.X = points;
  set.raw = RowMatrix::Zero(points.rows(), static_cast<Eigen::Index>(model_.outputs));
  set.averaged_sum = RowMatrix::Zero(points.rows(), static_cast<Eigen::Index>(model_.outputs));
  if (model_.iterations > 0) {
    accumulate_block_scores(model_.kernel, model_.dim, model_.block_size, model_.outputs,
                            model_.base_seed, model_.coefficients,
                            static_cast<std::size_t>(model_.iterations), set.X, set.raw);
    if (config_.averaging) {
      const Model snap = snapshot();
      set.averaged_sum = predict_averaged(snap, set.X) * static_cast<double>(model_.iterations);
    }
  }
  tracked_.push_back(std::move(set));
  return tracked_.size() - 1;
}

RowMatrix Trainer::tracked_values(std::size_t handle) const {
  return model_.scale * tracked_.at(handle).raw;
}

RowMatrix Trainer::tracked_averaged(std::size_t handle) const {
  if (!config_.averaging) throw InvalidArgument("averaging is not enabled for this run");
  if (model_.iterations == 0) return tracked_.at(handle).averaged_sum;
  return tracked_.at(handle).averaged_sum / static_cast<double>(model_.iterations);
}

double Trainer::elapsed_seconds() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

Model train(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
            const LossSpec& loss, const CheckpointObserver& observer) {
  Trainer trainer(data, config, kernel, loss);
  trainer.run(observer);
  return trainer.finish();
}

}  // namespace dsgd
