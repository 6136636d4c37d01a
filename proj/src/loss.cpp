#include "dsgd/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

struct KindName {
  LossKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LossKind::hinge, "hinge"},
    {LossKind::squared_hinge, "squared_hinge"},
    {LossKind::logistic, "logistic"},
    {LossKind::multiclass_logistic, "multiclass_logistic"},
    {LossKind::square, "square"},
    {LossKind::huber, "huber"},
    {LossKind::eps_insensitive, "eps_insensitive"},
    {LossKind::quantile, "quantile"},
    {LossKind::novelty, "novelty"},
    {LossKind::kl_density_ratio, "kl_density_ratio"},
};

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

void check_outputs(const LossSpec& spec, std::size_t n) {
  if (n != spec.outputs()) {
    throw InvalidArgument("loss " + std::string(to_string(spec.kind)) + " expects " +
                          std::to_string(spec.outputs()) + " score(s), got " + std::to_string(n));
  }
}

}  // namespace

std::string_view to_string(LossKind kind) {
  for (const auto& e : kKindNames) {
    if (e.kind == kind) return e.name;
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (const auto& e : kKindNames) {
    if (e.name == name) return e.kind;
  }
  if (name == "multiclass") return LossKind::multiclass_logistic;
  if (name == "svr" || name == "epsilon_insensitive") return LossKind::eps_insensitive;
  if (name == "density_ratio") return LossKind::kl_density_ratio;
  throw InvalidArgument("unknown loss '" + std::string(name) + "'");
}

void LossSpec::validate() const {
  bool known = false;
  for (const auto& e : kKindNames) known = known || e.kind == kind;
  if (!known) throw InvalidArgument("unknown loss kind code " + std::to_string(int(kind)));
  if (kind == LossKind::multiclass_logistic && num_classes < 2) {
    throw InvalidArgument("multiclass_logistic requires at least 2 classes");
  }
  if (kind == LossKind::eps_insensitive && !(epsilon >= 0.0 && std::isfinite(epsilon))) {
    throw InvalidArgument("eps_insensitive requires epsilon >= 0");
  }
  if (kind == LossKind::quantile && !(quantile > 0.0 && quantile < 1.0)) {
    throw InvalidArgument("quantile level must lie in (0, 1)");
  }
}

LossSpec make_loss(LossKind kind) {
  LossSpec s;
  s.kind = kind;
  return s;
}

LossSpec multiclass_loss(std::uint32_t num_classes) {
  LossSpec s;
  s.kind = LossKind::multiclass_logistic;
  s.num_classes = num_classes;
  return s;
}

LossSpec eps_insensitive_loss(double epsilon) {
  LossSpec s;
  s.kind = LossKind::eps_insensitive;
  s.epsilon = epsilon;
  return s;
}

LossSpec quantile_loss(double level) {
  LossSpec s;
  s.kind = LossKind::quantile;
  s.quantile = level;
  return s;
}

void check_target(const LossSpec& spec, double y) {
  if (!std::isfinite(y)) throw InvalidArgument("target must be finite");
  switch (spec.kind) {
    case LossKind::hinge:
    case LossKind::squared_hinge:
    case LossKind::logistic:
      if (y != 1.0 && y != -1.0) {
        throw InvalidArgument("loss " + std::string(to_string(spec.kind)) +
                              " requires labels in {-1, +1}, got " + std::to_string(y));
      }
      return;
    case LossKind::multiclass_logistic:
      if (y < 0.0 || y != std::floor(y) || y >= static_cast<double>(spec.num_classes)) {
        throw InvalidArgument("multiclass_logistic requires a class index in [0, " +
                              std::to_string(spec.num_classes) + "), got " + std::to_string(y));
      }
      return;
    case LossKind::kl_density_ratio:
      if (y != 0.0 && y != 1.0) {
        throw InvalidArgument("kl_density_ratio requires z in {0, 1}, got " + std::to_string(y));
      }
      return;
    default:
      return;
  }
}

double loss_value(const LossSpec& spec, std::span<const double> u, double y) {
  check_outputs(spec, u.size());
  check_target(spec, y);
  if (spec.kind == LossKind::multiclass_logistic) {
    const double m = *std::max_element(u.begin(), u.end());
    double s = 0.0;
    for (double v : u) s += std::exp(v - m);
    return m + std::log(s) - u[static_cast<std::size_t>(y)];
  }
  const double v = u[0];
  switch (spec.kind) {
    case LossKind::hinge:
      return std::max(0.0, 1.0 - y * v);
    case LossKind::squared_hinge: {
      const double h = std::max(0.0, 1.0 - y * v);
      return 0.5 * h * h;
    }
    case LossKind::logistic:
      return softplus(-y * v);
    case LossKind::square:
      return 0.5 * (v - y) * (v - y);
    case LossKind::huber: {
      const double a = std::abs(v - y);
      return a <= 1.0 ? 0.5 * a * a : a - 0.5;
    }
    case LossKind::eps_insensitive:
      return std::max(0.0, std::abs(v - y) - spec.epsilon);
    case LossKind::quantile:
      return std::max(spec.quantile * (y - v), (1.0 - spec.quantile) * (v - y));
    case LossKind::novelty:
      return std::max(0.0, y - v);
    case LossKind::kl_density_ratio:
      return y == 1.0 ? std::exp(std::min(v, kDensityRatioExpCap)) : -v;
    default:
      break;
  }
  throw InvalidArgument("unknown loss kind");
}

double loss_value(const LossSpec& spec, double u, double y) {
  return loss_value(spec, std::span<const double>(&u, 1), y);
}

void loss_grad(const LossSpec& spec, std::span<const double> u, double y, std::span<double> out) {
  check_outputs(spec, u.size());
  if (out.size() != u.size()) throw InvalidArgument("loss_grad: output has the wrong length");
  check_target(spec, y);
  if (spec.kind == LossKind::multiclass_logistic) {
    const double m = *std::max_element(u.begin(), u.end());
    double s = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) {
      out[c] = std::exp(u[c] - m);
      s += out[c];
    }
    for (double& g : out) g /= s;
    out[static_cast<std::size_t>(y)] -= 1.0;
    return;
  }
  const double v = u[0];
  double g = 0.0;
  switch (spec.kind) {
    case LossKind::hinge:
      g = y * v >= 1.0 ? 0.0 : -y;
      break;
    case LossKind::squared_hinge:
      g = y * v >= 1.0 ? 0.0 : v - y;
      break;
    case LossKind::logistic: {
      // -y exp(-yv) / (1 + exp(-yv)) = -y / (1 + exp(yv))
      const double z = y * v;
      g = z >= 0.0 ? -y * std::exp(-z) / (1.0 + std::exp(-z)) : -y / (1.0 + std::exp(z));
      break;
    }
    case LossKind::square:
      g = v - y;
      break;
    case LossKind::huber:
      g = std::abs(v - y) <= 1.0 ? v - y : sgn(v - y);
      break;
    case LossKind::eps_insensitive:
      g = std::abs(v - y) <= spec.epsilon ? 0.0 : sgn(v - y);
      break;
    case LossKind::quantile:
      g = v >= y ? 1.0 - spec.quantile : -spec.quantile;
      break;
    case LossKind::novelty:
      g = v >= y ? 0.0 : -1.0;
      break;
    case LossKind::kl_density_ratio:
      g = y == 1.0 ? std::exp(std::min(v, kDensityRatioExpCap)) : -1.0;
      break;
    default:
      throw InvalidArgument("unknown loss kind");
  }
  out[0] = g;
}

double loss_grad(const LossSpec& spec, double u, double y) {
  double g = 0.0;
  loss_grad(spec, std::span<const double>(&u, 1), y, std::span<double>(&g, 1));
  return g;
}

NoveltyStep novelty_grads(double f_x, double tau_prev) noexcept {
  if (f_x >= tau_prev) return {0, TauStep::up};
  return {1, TauStep::down};
}

DensityRatioCoefs density_ratio_grad(double /*f_x*/, double f_y, int z) {
  if (z != 0 && z != 1) throw InvalidArgument("density_ratio_grad: z must be 0 or 1");
  DensityRatioCoefs c;
  if (z == 1) {
    c.saturated = f_y > kDensityRatioExpCap;
    c.coef_y = std::exp(std::min(f_y, kDensityRatioExpCap));
  } else {
    c.coef_x = 1.0;
  }
  return c;
}

}  // namespace dsgd
