#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace dsgd {

enum class LossKind : std::uint8_t {
  hinge = 0,
  squared_hinge = 1,
  logistic = 2,
  multiclass_logistic = 3,
  square = 4,
  huber = 5,
  eps_insensitive = 6,
  quantile = 7,
  novelty = 8,
  kl_density_ratio = 9,
};

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct LossSpec {
  LossKind kind = LossKind::square;
  /// Class count for multiclass_logistic.
  std::uint32_t num_classes = 2;
  /// Insensitivity width for eps_insensitive. Zero gives absolute deviation.
  double epsilon = 0.0;
  /// Quantile level in (0, 1).
  double quantile = 0.5;

  void validate() const;
  /// Number of model outputs: num_classes for multiclass, otherwise 1.
  std::size_t outputs() const noexcept {
    return kind == LossKind::multiclass_logistic ? num_classes : 1;
  }
  bool is_classification() const noexcept {
    return kind == LossKind::hinge || kind == LossKind::squared_hinge ||
           kind == LossKind::logistic || kind == LossKind::multiclass_logistic;
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

LossSpec make_loss(LossKind kind);
LossSpec multiclass_loss(std::uint32_t num_classes);
LossSpec eps_insensitive_loss(double epsilon);
LossSpec quantile_loss(double level);

/// Exponential cap used by the density-ratio term, exp(30).
inline constexpr double kDensityRatioExpCap = 30.0;

/// Throws InvalidArgument when `y` is not a valid target for the loss:
/// +-1 labels for hinge/squared_hinge/logistic, a class index in [0, C) for
/// multiclass, the Bernoulli selector z in {0, 1} for the density ratio, any
/// finite real otherwise (for novelty `y` is the threshold tau).
void check_target(const LossSpec& spec, double y);

/// Loss at score u (length outputs()) and target y. For novelty, y is tau.
/// For the density ratio, u is f at the sample selected by y = z.
double loss_value(const LossSpec& spec, std::span<const double> u, double y);
double loss_value(const LossSpec& spec, double u, double y);

/// Subgradient of loss_value in u. For multiclass this is softmax(u) - e_y,
/// the negated bracket of the alpha update. Ties at kinks take the branch
/// written with ">=" (zero for hinge and eps-insensitive, 1 - tau for
/// quantile, the quadratic branch for huber).
void loss_grad(const LossSpec& spec, std::span<const double> u, double y, std::span<double> out);
double loss_grad(const LossSpec& spec, double u, double y);

enum class TauStep : std::uint8_t { up, down };

struct NoveltyStep {
  /// 0 when f(x) >= tau (no new coefficient), 1 when f(x) < tau.
  int alpha_sign = 0;
  /// up: tau += gamma * nu; down: tau -= gamma * (1 - nu).
  TauStep tau_direction = TauStep::up;
};

NoveltyStep novelty_grads(double f_x, double tau_prev) noexcept;

struct DensityRatioCoefs {
  /// Multiplies phi(y), the sample from the second distribution.
  double coef_y = 0.0;
  /// Multiplies phi(x), the sample from the first distribution.
  double coef_x = 0.0;
  bool saturated = false;
};

/// Coefficients multiplying phi(y) and phi(x) in the density-ratio update,
/// before the -2 gamma factor: (delta_1(z) exp(f_y), delta_0(z)). The
/// exponent is capped at kDensityRatioExpCap; `saturated` reports the cap.
DensityRatioCoefs density_ratio_grad(double f_x, double f_y, int z);

}  // namespace dsgd
