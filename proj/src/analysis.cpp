#include "dsgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include <json.hpp>

#include "dsgd/error.hpp"
#include "dsgd/predictor.hpp"
#include "dsgd/random_stream.hpp"

namespace dsgd {

namespace {

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

// Score used for a loss audit: labels for classification, reals otherwise.
double draw_target(const LossSpec& spec, RandomStream& s) {
  switch (spec.kind) {
    case LossKind::hinge:
    case LossKind::squared_hinge:
    case LossKind::logistic:
      return s.sign();
    case LossKind::multiclass_logistic:
      return static_cast<double>(s.below(spec.num_classes));
    case LossKind::kl_density_ratio:
      return s.bernoulli(0.5) ? 1.0 : 0.0;
    default:
      return s.uniform(-2.0, 2.0);
  }
}

// A non-differentiable point of the loss for target y.
double kink(const LossSpec& spec, double y, RandomStream& s) {
  switch (spec.kind) {
    case LossKind::eps_insensitive:
      return s.bernoulli(0.5) ? y + spec.epsilon : y - spec.epsilon;
    default:
      return y;  // hinge, squared hinge: yu = 1 at u = y; quantile, novelty: u = y
  }
}

}  // namespace

Series convergence_curve(const std::vector<Checkpoint>& checkpoints,
                         const Eigen::VectorXd& reference) {
  if (checkpoints.empty()) throw InvalidArgument("convergence_curve: no checkpoints recorded");
  Series out;
  out.reserve(checkpoints.size());
  for (const auto& c : checkpoints) {
    if (c.values.size() != reference.size()) {
      throw InvalidArgument("checkpoint at t=" + std::to_string(c.t) +
                            " does not match the reference grid");
    }
    out.push_back({static_cast<double>(c.t), mse(c.values, reference)});
  }
  return out;
}

double fit_loglog_slope(const Series& series, double burn_in) {
  if (series.size() < 5) throw InvalidArgument("slope fit needs at least 5 points");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw InvalidArgument("burn-in fraction must be in [0, 1)");
  for (const auto& p : series) {
    if (!(p.x > 0.0) || !(p.value > 0.0)) {
      throw InvalidArgument("slope fit needs positive x and values");
    }
  }
  const auto skip = static_cast<std::size_t>(std::floor(burn_in * static_cast<double>(series.size())));
  const std::size_t n = series.size() - skip;
  if (n < 2) throw InvalidArgument("too few points after burn-in");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = skip; i < series.size(); ++i) {
    mx += std::log(series[i].x);
    my += std::log(series[i].value);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = skip; i < series.size(); ++i) {
    const double dx = std::log(series[i].x) - mx;
    sxy += dx * (std::log(series[i].value) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InvalidArgument("slope fit needs distinct x values");
  return sxy / sxx;
}

ConvergenceRun convergence_run(const Dataset& train, const TrainConfig& config,
                               const KernelSpec& kernel, const LossSpec& loss,
                               const Eigen::Ref<const RowMatrix>& grid,
                               const Eigen::VectorXd& reference) {
  if (reference.size() != grid.rows()) throw InvalidArgument("reference must match the grid");
  Trainer trainer(train, config, kernel, loss);
  const std::size_t handle = trainer.track(grid);
  ConvergenceRun run;
  trainer.run([&](const Trainer& tr) {
    run.last_checkpoints.push_back({tr.iteration(), tr.tracked_values(handle).col(0)});
    if (config.averaging) {
      run.averaged_checkpoints.push_back({tr.iteration(), tr.tracked_averaged(handle).col(0)});
    }
  });
  if (!run.last_checkpoints.empty()) run.last = convergence_curve(run.last_checkpoints, reference);
  if (!run.averaged_checkpoints.empty()) {
    run.averaged = convergence_curve(run.averaged_checkpoints, reference);
  }
  return run;
}

Series mc_kernel_error(const KernelSpec& spec, const Eigen::Ref<const RowMatrix>& A,
                       const Eigen::Ref<const RowMatrix>& B, const std::vector<std::size_t>& r_values,
                       std::uint64_t seed) {
  if (A.rows() != B.rows() || A.cols() != B.cols() || A.rows() == 0) {
    throw InvalidArgument("mc_kernel_error: A and B must be non-empty and the same shape");
  }
  if (!std::is_sorted(r_values.begin(), r_values.end())) {
    throw InvalidArgument("mc_kernel_error: r values must be ascending");
  }
  const auto d = static_cast<std::size_t>(A.cols());
  std::vector<double> exact(static_cast<std::size_t>(A.rows()));
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    exact[static_cast<std::size_t>(i)] =
        exact_kernel(spec, {A.row(i).data(), d}, {B.row(i).data(), d});
  }
  Series out;
  for (std::size_t r : r_values) {
    const FeatureBlock block = sample_block(spec, d, r, seed, 1);
    const RowMatrix pa = featurize(block, spec, A);
    const RowMatrix pb = featurize(block, spec, B);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double est = pa.row(i).dot(pb.row(i));
      worst = std::max(worst, std::abs(est - exact[static_cast<std::size_t>(i)]));
    }
    out.push_back({static_cast<double>(r), worst});
  }
  return out;
}

bool bounded_coefficient_schedule(double theta, double nu) noexcept {
  const double p = theta * nu;
  if (!std::isfinite(p) || p <= 0.0) return false;
  if (p > 1.0 && p < 2.0) return true;
  return p >= 1.0 && p == std::floor(p);
}

CoefficientAudit coefficient_bound_audit(double theta, double nu, std::uint64_t t_max) {
  if (!bounded_coefficient_schedule(theta, nu)) {
    throw InvalidArgument("theta * nu = " + format_double(theta * nu) +
                          " is outside (1, 2) and not a positive integer");
  }
  CoefficientAudit audit;
  std::vector<double> a;
  a.reserve(t_max);
  for (std::uint64_t t = 1; t <= t_max; ++t) {
    const double gamma = theta / static_cast<double>(t);
    const double factor = 1.0 - gamma * nu;
    for (double& v : a) v *= factor;
    a.push_back(-gamma);
    const double bound = gamma;
    for (double v : a) {
      const double mag = std::abs(v);
      const double ratio = mag / bound;
      if (ratio > audit.worst_ratio) {
        audit.worst_ratio = ratio;
        audit.worst_t = t;
      }
      audit.max_equality_gap = std::max(audit.max_equality_gap, std::abs(mag - bound));
      audit.max_excess = std::max(audit.max_excess, mag - bound);
    }
  }
  if (t_max == 0) audit.max_excess = 0.0;
  return audit;
}

GradientAudit finite_difference_audit(const LossSpec& spec, std::size_t points, std::uint64_t seed,
                                      double tolerance) {
  spec.validate();
  RandomStream s(seed, 0);
  const std::size_t K = spec.outputs();
  GradientAudit audit;
  std::vector<double> u(K), g(K), up(K), um(K);
  for (std::size_t p = 0; p < points; ++p) {
    const double y = draw_target(spec, s);
    for (auto& v : u) v = s.uniform(-4.0, 4.0);
    if (spec.kind == LossKind::huber) u[0] = y + s.uniform(-0.9, 0.9);
    loss_grad(spec, u, y, g);
    for (std::size_t k = 0; k < K; ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(u[k]));
      up = u;
      um = u;
      up[k] += h;
      um[k] -= h;
      const double fd = (loss_value(spec, up, y) - loss_value(spec, um, y)) / (up[k] - um[k]);
      const double rel = std::abs(fd - g[k]) / std::max({std::abs(g[k]), std::abs(fd), 1e-8});
      ++audit.checks;
      audit.worst = std::max(audit.worst, rel);
      if (rel > tolerance) ++audit.failures;
    }
  }
  return audit;
}

GradientAudit subgradient_audit(const LossSpec& spec, std::size_t pairs, std::uint64_t seed) {
  spec.validate();
  if (spec.outputs() != 1) throw InvalidArgument("subgradient audit covers scalar losses");
  RandomStream s(seed, 1);
  GradientAudit audit;
  for (std::size_t p = 0; p < pairs; ++p) {
    const double y = draw_target(spec, s);
    const double u = p % 10 == 0 ? kink(spec, y, s) : s.uniform(-4.0, 4.0);
    const double u2 = s.uniform(-4.0, 4.0);
    const double lu = loss_value(spec, u, y);
    const double g = loss_grad(spec, u, y);
    const double lhs = loss_value(spec, u2, y);
    const double rhs = lu + g * (u2 - u);
    const double slack = 1e-12 * (1.0 + std::abs(lhs) + std::abs(rhs));
    ++audit.checks;
    const double violation = rhs - lhs;
    audit.worst = std::max(audit.worst, violation);
    if (violation > slack) ++audit.failures;
  }
  return audit;
}

std::vector<HingeCase> hinge_case_audit() {
  // x = 1 in one dimension with the identity map, theta = 1 and nu = 0, so
  // gamma_t = 1 / t and the new coefficient is gamma_t y x when y f(x) < 1.
  Dataset data;
  data.X = RowMatrix::Ones(2, 1);
  data.y = {1.0, -1.0};
  data.task = Task::binary;
  TrainConfig config;
  config.theta = 1.0;
  config.nu = 0.0;
  config.iterations = 4;
  config.strategy = EvalStrategy::recompute;
  Trainer trainer(data, config, linear_kernel(), make_loss(LossKind::hinge));

  std::vector<HingeCase> cases;
  auto run = [&](std::size_t row, const std::string& what, double expected) {
    const std::size_t batch[] = {row};
    trainer.step(batch);
    const auto& m = trainer.model();
    const double observed = m.coefficients.back() * m.scale;
    cases.push_back({what, expected, observed});
  };
  run(0, "y=+1, f=0: yf < 1 gives gamma_1 y x", 1.0);
  run(0, "y=+1, f=1: yf = 1 tie gives 0", 0.0);
  run(1, "y=-1, f=1: yf = -1 < 1 gives gamma_3 y x", -1.0 / 3.0);
  // f = 1 - 1/3 = 2/3 at x for both labels; y=+1 has yf < 1.
  run(0, "y=+1, f=2/3: yf < 1 gives gamma_4 y x", 0.25);
  return cases;
}

void write_audit_record(std::ostream& out, const std::string& name, bool pass,
                        const std::vector<std::pair<std::string, double>>& values) {
  nlohmann::ordered_json j;
  j["audit"] = name;
  j["pass"] = pass;
  for (const auto& [k, v] : values) j[k] = v;
  out << j.dump() << '\n';
}

void write_series_csv(std::ostream& out, const Series& series, const std::string& x_name,
                      const std::string& value_name) {
  out << x_name << ',' << value_name << '\n';
  for (const auto& p : series) out << format_double(p.x) << ',' << format_double(p.value) << '\n';
}

}  // namespace dsgd
