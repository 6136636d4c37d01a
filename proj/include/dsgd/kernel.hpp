#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace dsgd {

enum class KernelFamily : std::uint8_t {
  gaussian = 0,
  laplacian = 1,
  cauchy = 2,
  hellinger = 3,
  arc_cosine = 4,
  polynomial_sketch = 5,
  /// Deterministic identity feature map phi(x) = x, i.e. k(x, x') = <x, x'>.
  /// Not a random-feature kernel; exists so solvers can be compared against
  /// exact linear SGD.
  linear = 6,
};

std::string_view to_string(KernelFamily family);
/// Throws InvalidArgument naming the unknown family.
KernelFamily parse_kernel_family(std::string_view name);

/// Kernel family plus its hyperparameters. Only the fields relevant to the
/// family are consulted; the rest keep their defaults.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  /// Length scale for gaussian, laplacian and cauchy.
  double bandwidth = 1.0;
  /// Arc-cosine order n; 0 and 1 are supported.
  std::uint32_t order = 1;
  /// Polynomial degree p.
  std::uint32_t degree = 2;
  /// Polynomial bias c.
  double bias = 0.0;
  /// Count-sketch width for the polynomial sketch.
  std::uint32_t sketch_dim = 64;

  bool uses_bandwidth() const noexcept {
    return family == KernelFamily::gaussian || family == KernelFamily::laplacian ||
           family == KernelFamily::cauchy;
  }

  /// Throws InvalidArgument on out-of-range hyperparameters.
  void validate() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

KernelSpec gaussian_kernel(double bandwidth);
KernelSpec laplacian_kernel(double bandwidth);
KernelSpec cauchy_kernel(double bandwidth);
KernelSpec hellinger_kernel();
KernelSpec arc_cosine_kernel(std::uint32_t order);
KernelSpec polynomial_kernel(std::uint32_t degree, double bias, std::uint32_t sketch_dim);
KernelSpec linear_kernel();

/// Closed-form kernel value with bandwidth applied to the inputs:
///   gaussian     exp(-|x - x'|^2 / (2 s^2))
///   laplacian    exp(-|x - x'|_1 / s)
///   cauchy       prod_i 1 / (1 + ((x_i - x'_i) / s)^2)
///   hellinger    sum_i sqrt(x_i x'_i)             (inputs must be >= 0)
///   arc_cosine   (1/pi) |x|^n |x'|^n J_n(angle)
///   polynomial   (<x, x'> + c)^p
///   linear       <x, x'>
double exact_kernel(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp);

}  // namespace dsgd
