#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dsgd/dataset.hpp"
#include "dsgd/features.hpp"
#include "dsgd/model.hpp"
#include "dsgd/predictor.hpp"

namespace dsgd {

/// How f is evaluated on the mini-batch each iteration.
enum class EvalStrategy : std::uint8_t {
  /// Pick `cached` when the data set will be revisited, else `recompute`.
  automatic,
  /// Regenerate every prior block and evaluate it on the batch.
  recompute,
  /// Keep f at every training row up to date as blocks are added.
  cached,
};

struct TrainConfig {
  /// Step size gamma_t = theta / t. Unset means theta = 1 / nu.
  std::optional<double> theta;
  double nu = 1.0;
  std::size_t batch_size = 1;
  std::size_t block_size = 1;
  std::uint64_t iterations = 0;
  std::uint64_t base_seed = 0;
  /// Iterations after which the checkpoint observer runs; ascending, <= T.
  std::vector<std::uint64_t> eval_schedule;
  bool averaging = false;
  EvalStrategy strategy = EvalStrategy::automatic;

  double step_theta() const { return theta ? *theta : 1.0 / nu; }
  void validate() const;
};

/// a_t^i = -gamma_i prod_{j=i+1}^t (1 - gamma_j nu) for i = 1..t, with
/// gamma_j = theta / j.
std::vector<double> coefficient_weights(std::uint64_t t, double theta, double nu);

/// Rows of batch `iteration`: batch_size uniform draws with replacement from
/// [0, n), addressed by (base_seed, iteration) in the data-sampling domain.
std::vector<std::size_t> uniform_batch(std::uint64_t base_seed, std::uint64_t iteration,
                                       std::size_t n, std::size_t batch_size);

class Trainer;
using CheckpointObserver = std::function<void(const Trainer&)>;

/// Doubly stochastic functional gradient descent on a fixed data set.
///
/// Each iteration samples a batch with replacement, evaluates f on it,
/// draws the next feature block from (base_seed, t) and appends one
/// coefficient block. The (1 - gamma_t nu) decay of earlier blocks is held in
/// a global scale factor; an exact zero resets all earlier blocks and a scale
/// below 1e-12 is folded into storage.
class Trainer {
 public:
  Trainer(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
          const LossSpec& loss);

  /// Square loss with one regression target per output: targets is n x K.
  /// Output k follows exactly the trajectory of a single-output run on
  /// column k with the same seeds.
  Trainer(const RowMatrix& X, const RowMatrix& targets, const TrainConfig& config,
          const KernelSpec& kernel);

  /// One iteration with a batch drawn from the data stream.
  void step();
  /// One iteration on the given row indices (block index = iteration()+1).
  void step(std::span<const std::size_t> batch);
  /// Runs until config.iterations, calling `observer` at scheduled
  /// checkpoints.
  void run(const CheckpointObserver& observer = {});

  /// Rows the next step() would sample.
  std::vector<std::size_t> sample_batch(std::uint64_t iteration) const;

  std::uint64_t iteration() const noexcept { return model_.iterations; }
  const Model& model() const noexcept { return model_; }
  /// Copy of the current model with averaged coefficients materialized.
  Model snapshot() const;
  /// Final model; the trainer is left empty.
  Model finish();

  /// Keeps f (and the averaged iterate when enabled) at `points` updated
  /// after every iteration. Returns a handle for tracked_*.
  std::size_t track(const RowMatrix& points);
  RowMatrix tracked_values(std::size_t handle) const;
  RowMatrix tracked_averaged(std::size_t handle) const;

  /// f at the last batch, before the update.
  const RowMatrix& last_batch_scores() const noexcept { return batch_scores_; }
  double last_batch_loss() const noexcept { return batch_loss_; }
  double elapsed_seconds() const;
  bool uses_cache() const noexcept { return use_cache_; }
  std::uint64_t saturation_count() const noexcept { return saturations_; }
  std::uint64_t reset_count() const noexcept { return resets_; }
  std::uint64_t fold_count() const noexcept { return folds_; }

 private:
  struct PointSet {
    RowMatrix X;
    RowMatrix raw;  // sum of stored coefficients . features, current units
    RowMatrix averaged_sum;  // sum over iterations of scale * raw
  };

  void init(const TrainConfig& config, const KernelSpec& kernel, const LossSpec& loss);
  void evaluate_batch(std::span<const std::size_t> batch);
  void materialize_averages();
  void rescale_storage(double factor);
  void add_block_to(PointSet& set, const FeatureBlock& block, std::span<const double> stored);

  RowMatrix X_;
  std::vector<double> y_;
  RowMatrix targets_;
  bool multi_target_ = false;
  TrainConfig config_;
  double theta_ = 1.0;
  Model model_;

  bool use_cache_ = false;
  PointSet data_cache_;
  std::vector<PointSet> tracked_;
  BlockCache block_cache_;

  // Averaging: accumulated effective coefficients are
  // avg_base_[s] + stored_s * (scale_sum_ - avg_start_[s]).
  std::vector<double> avg_base_;
  std::vector<double> avg_start_;
  double scale_sum_ = 0.0;

  std::vector<std::size_t> class0_rows_;
  std::vector<std::size_t> class1_rows_;

  RowMatrix batch_X_;
  RowMatrix batch_scores_;
  double batch_loss_ = 0.0;
  std::uint64_t saturations_ = 0;
  std::uint64_t resets_ = 0;
  std::uint64_t folds_ = 0;
  std::chrono::steady_clock::time_point start_;
};

/// Runs config.iterations iterations and returns the model. Throws
/// DivergenceError naming the iteration if f becomes non-finite.
Model train(const Dataset& data, const TrainConfig& config, const KernelSpec& kernel,
            const LossSpec& loss, const CheckpointObserver& observer = {});

}  // namespace dsgd
