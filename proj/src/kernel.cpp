#include "dsgd/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

struct FamilyName {
  KernelFamily family;
  std::string_view name;
};

constexpr FamilyName kFamilyNames[] = {
    {KernelFamily::gaussian, "gaussian"},
    {KernelFamily::laplacian, "laplacian"},
    {KernelFamily::cauchy, "cauchy"},
    {KernelFamily::hellinger, "hellinger"},
    {KernelFamily::arc_cosine, "arc_cosine"},
    {KernelFamily::polynomial_sketch, "polynomial_sketch"},
    {KernelFamily::linear, "linear"},
};

void check_same_dim(std::span<const double> x, std::span<const double> xp) {
  if (x.size() != xp.size()) {
    throw InvalidArgument("exact_kernel: dimension mismatch (" + std::to_string(x.size()) +
                          " vs " + std::to_string(xp.size()) + ")");
  }
}

double dot(std::span<const double> x, std::span<const double> xp) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * xp[i];
  return s;
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  for (const auto& entry : kFamilyNames) {
    if (entry.family == family) return entry.name;
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  for (const auto& entry : kFamilyNames) {
    if (entry.name == name) return entry.family;
  }
  if (name == "polynomial") return KernelFamily::polynomial_sketch;
  if (name == "arccos" || name == "arc-cosine") return KernelFamily::arc_cosine;
  throw InvalidArgument("unsupported kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  bool known = false;
  for (const auto& entry : kFamilyNames) known = known || entry.family == family;
  if (!known) {
    throw InvalidArgument("unsupported kernel family code " +
                          std::to_string(static_cast<int>(family)));
  }
  if (uses_bandwidth() && !(bandwidth > 0.0 && std::isfinite(bandwidth))) {
    throw InvalidArgument(std::string(to_string(family)) +
                          " kernel requires a positive finite bandwidth");
  }
  if (family == KernelFamily::arc_cosine && order > 1) {
    throw InvalidArgument("arc_cosine kernel supports order 0 or 1, got " +
                          std::to_string(order));
  }
  if (family == KernelFamily::polynomial_sketch) {
    if (degree < 1) throw InvalidArgument("polynomial kernel requires degree >= 1");
    if (sketch_dim < 1) throw InvalidArgument("polynomial kernel requires sketch_dim >= 1");
    if (!(bias >= 0.0 && std::isfinite(bias))) {
      throw InvalidArgument("polynomial kernel requires a nonnegative bias");
    }
  }
}

KernelSpec gaussian_kernel(double bandwidth) {
  KernelSpec s;
  s.family = KernelFamily::gaussian;
  s.bandwidth = bandwidth;
  return s;
}

KernelSpec laplacian_kernel(double bandwidth) {
  KernelSpec s;
  s.family = KernelFamily::laplacian;
  s.bandwidth = bandwidth;
  return s;
}

KernelSpec cauchy_kernel(double bandwidth) {
  KernelSpec s;
  s.family = KernelFamily::cauchy;
  s.bandwidth = bandwidth;
  return s;
}

KernelSpec hellinger_kernel() {
  KernelSpec s;
  s.family = KernelFamily::hellinger;
  return s;
}

KernelSpec arc_cosine_kernel(std::uint32_t order) {
  KernelSpec s;
  s.family = KernelFamily::arc_cosine;
  s.order = order;
  return s;
}

KernelSpec polynomial_kernel(std::uint32_t degree, double bias, std::uint32_t sketch_dim) {
  KernelSpec s;
  s.family = KernelFamily::polynomial_sketch;
  s.degree = degree;
  s.bias = bias;
  s.sketch_dim = sketch_dim;
  return s;
}

KernelSpec linear_kernel() {
  KernelSpec s;
  s.family = KernelFamily::linear;
  return s;
}

double exact_kernel(const KernelSpec& spec, std::span<const double> x,
                    std::span<const double> xp) {
  check_same_dim(x, xp);
  switch (spec.family) {
    case KernelFamily::gaussian: {
      double sq = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = (x[i] - xp[i]) / spec.bandwidth;
        sq += diff * diff;
      }
      return std::exp(-0.5 * sq);
    }
    case KernelFamily::laplacian: {
      double l1 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) l1 += std::abs(x[i] - xp[i]) / spec.bandwidth;
      return std::exp(-l1);
    }
    case KernelFamily::cauchy: {
      double prod = 1.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = (x[i] - xp[i]) / spec.bandwidth;
        prod *= 1.0 / (1.0 + diff * diff);
      }
      return prod;
    }
    case KernelFamily::hellinger: {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0.0 || xp[i] < 0.0) {
          throw InvalidArgument("hellinger kernel requires nonnegative inputs");
        }
        s += std::sqrt(x[i] * xp[i]);
      }
      return s;
    }
    case KernelFamily::arc_cosine: {
      const double nx = std::sqrt(dot(x, x));
      const double nxp = std::sqrt(dot(xp, xp));
      // The step feature is zero at a zero input, so the kernel is too.
      if (nx == 0.0 || nxp == 0.0) return 0.0;
      const double c = std::clamp(dot(x, xp) / (nx * nxp), -1.0, 1.0);
      const double angle = std::acos(c);
      const double pi = std::numbers::pi;
      if (spec.order == 0) return (pi - angle) / pi;
      return nx * nxp * (std::sin(angle) + (pi - angle) * c) / pi;
    }
    case KernelFamily::polynomial_sketch:
      return std::pow(dot(x, xp) + spec.bias, static_cast<double>(spec.degree));
    case KernelFamily::linear:
      return dot(x, xp);
  }
  throw InvalidArgument("unsupported kernel family code " +
                        std::to_string(static_cast<int>(spec.family)));
}

}  // namespace dsgd
