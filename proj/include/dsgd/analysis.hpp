#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dsgd/dataset.hpp"
#include "dsgd/features.hpp"
#include "dsgd/trainer.hpp"

namespace dsgd {

/// (t or r, value) pairs.
struct SeriesPoint {
  double x = 0.0;
  double value = 0.0;
};
using Series = std::vector<SeriesPoint>;

/// Predictions of a run at one checkpoint.
struct Checkpoint {
  std::uint64_t t = 0;
  Eigen::VectorXd values;
};

/// Mean squared pointwise error of each checkpoint against `reference`.
Series convergence_curve(const std::vector<Checkpoint>& checkpoints,
                         const Eigen::VectorXd& reference);

inline constexpr double kDefaultBurnIn = 0.1;

/// Least-squares slope of log(value) against log(x) after dropping the
/// first floor(burn_in * size) points. Needs at least 5 points in total and
/// 2 after burn-in; every x and value must be positive.
double fit_loglog_slope(const Series& series, double burn_in = kDefaultBurnIn);

/// Trains and records the last and averaged iterates on `grid` at every
/// checkpoint of config.eval_schedule.
struct ConvergenceRun {
  Series last;
  Series averaged;
  std::vector<Checkpoint> last_checkpoints;
  std::vector<Checkpoint> averaged_checkpoints;
};
ConvergenceRun convergence_run(const Dataset& train, const TrainConfig& config,
                               const KernelSpec& kernel, const LossSpec& loss,
                               const Eigen::Ref<const RowMatrix>& grid,
                               const Eigen::VectorXd& reference);

/// For each r: max over pairs (A_i, B_i) of |features(A_i) . features(B_i) -
/// exact_kernel(A_i, B_i)| using block 1 of size r from `seed`.
Series mc_kernel_error(const KernelSpec& spec, const Eigen::Ref<const RowMatrix>& A,
                       const Eigen::Ref<const RowMatrix>& B, const std::vector<std::size_t>& r_values,
                       std::uint64_t seed);

/// True when theta * nu lies in (1, 2) or is a positive integer.
bool bounded_coefficient_schedule(double theta, double nu) noexcept;

struct CoefficientAudit {
  /// max over t <= t_max and i <= t of |a_t^i| t / theta.
  double worst_ratio = 0.0;
  std::uint64_t worst_t = 0;
  /// max over t, i of | |a_t^i| - theta / t |.
  double max_equality_gap = 0.0;
  /// max over t of |a_t^i| - theta / t (positive means a bound violation).
  double max_excess = 0.0;
};

/// Sweeps t = 1..t_max with incremental products. Rejects schedules outside
/// the (1, 2) union positive-integer range.
CoefficientAudit coefficient_bound_audit(double theta, double nu, std::uint64_t t_max);

struct GradientAudit {
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst = 0.0;
};

/// Central differences against loss_grad at `points` random scores for a
/// smooth loss; worst is the largest relative error
/// |fd - g| / max(|g|, |fd|, 1e-8).
GradientAudit finite_difference_audit(const LossSpec& spec, std::size_t points, std::uint64_t seed,
                                      double tolerance = 1e-5);

/// l(u') >= l(u) + g(u)(u' - u) over `pairs` random (u, u') pairs, a tenth of
/// them with u placed exactly on a kink. worst is the largest violation.
GradientAudit subgradient_audit(const LossSpec& spec, std::size_t pairs, std::uint64_t seed);

/// Crafted hinge margin cases run through Trainer::step with the identity
/// feature map: (description, expected coefficient, observed coefficient).
struct HingeCase {
  std::string description;
  double expected = 0.0;
  double observed = 0.0;
};
std::vector<HingeCase> hinge_case_audit();

/// One JSON object per line: {"audit": name, "pass": bool, ...values}.
void write_audit_record(std::ostream& out, const std::string& name, bool pass,
                        const std::vector<std::pair<std::string, double>>& values);

/// Series as CSV with the given column names.
void write_series_csv(std::ostream& out, const Series& series, const std::string& x_name,
                      const std::string& value_name);

}  // namespace dsgd
