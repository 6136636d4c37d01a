// dsgd: train, predict, gp, bench, synth and audit subcommands.
//
// Exit codes: 0 success, 1 failed audit or internal error, 2 usage,
// 3 data or model-file error, 4 numerical divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dsgd/analysis.hpp"
#include "dsgd/baselines.hpp"
#include "dsgd/dataset.hpp"
#include "dsgd/error.hpp"
#include "dsgd/gp_posterior.hpp"
#include "dsgd/parallel.hpp"
#include "dsgd/predictor.hpp"
#include "dsgd/trainer.hpp"

namespace {

using namespace dsgd;

constexpr int kExitAuditFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

constexpr std::size_t kMedianPairBudget = 20000;

struct KernelFlags {
  std::string family = "gaussian";
  std::string bandwidth = "median:1";
  std::uint32_t order = 1;
  std::uint32_t degree = 2;
  double bias = 0.0;
  std::uint32_t sketch_dim = 64;

  void add(CLI::App* app) {
    app->add_option("--kernel", family,
                    "gaussian|laplacian|cauchy|hellinger|arc_cosine|polynomial_sketch|linear")
        ->capture_default_str();
    app->add_option("--bandwidth", bandwidth, "value or median:<mult>")->capture_default_str();
    app->add_option("--order", order, "arc-cosine order (0 or 1)")->capture_default_str();
    app->add_option("--degree", degree, "polynomial degree")->capture_default_str();
    app->add_option("--bias", bias, "polynomial bias")->capture_default_str();
    app->add_option("--sketch-dim", sketch_dim, "TensorSketch width")->capture_default_str();
  }

  KernelSpec build(const RowMatrix& X, std::uint64_t seed) const {
    KernelSpec k;
    k.family = parse_kernel_family(family);
    k.order = order;
    k.degree = degree;
    k.bias = bias;
    k.sketch_dim = sketch_dim;
    if (k.uses_bandwidth()) {
      if (bandwidth.rfind("median:", 0) == 0) {
        const double mult = parse_positive(bandwidth.substr(7), "--bandwidth multiplier");
        RandomStream pairs(domain_key(seed, domains::kPairs), 0);
        k.bandwidth = mult * median_heuristic(X, kMedianPairBudget, pairs);
      } else {
        k.bandwidth = parse_positive(bandwidth, "--bandwidth");
      }
    }
    k.validate();
    return k;
  }

  static double parse_positive(const std::string& text, const char* what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || !(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(std::string(what) + ": expected a positive number, got '" + text + "'");
    }
    return v;
  }
};

struct LossFlags {
  std::string kind = "square";
  std::uint32_t classes = 0;
  double epsilon = 0.1;
  double quantile = 0.5;

  void add(CLI::App* app) {
    app->add_option("--loss", kind,
                    "hinge|squared_hinge|logistic|multiclass_logistic|square|huber|"
                    "eps_insensitive|quantile|novelty|kl_density_ratio")
        ->capture_default_str();
    app->add_option("--classes", classes, "class count for multiclass_logistic (default: max label + 1)");
    app->add_option("--epsilon", epsilon, "eps_insensitive width")->capture_default_str();
    app->add_option("--quantile", quantile, "quantile level")->capture_default_str();
  }

  LossSpec build(const Dataset& data) const {
    LossSpec l;
    l.kind = parse_loss_kind(kind);
    l.epsilon = epsilon;
    l.quantile = quantile;
    if (l.kind == LossKind::multiclass_logistic) {
      std::uint32_t c = classes;
      if (c == 0) {
        double top = 0.0;
        for (double y : data.y) top = std::max(top, y);
        c = static_cast<std::uint32_t>(top) + 1;
      }
      l.num_classes = std::max<std::uint32_t>(c, 2);
    }
    l.validate();
    return l;
  }
};

struct SolverFlags {
  std::optional<double> theta;
  double nu = 1e-4;
  std::size_t batch_size = 64;
  std::size_t block_size = 64;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--theta", theta, "step size gamma_t = theta / t (default 1 / nu)");
    app->add_option("--nu", nu, "regularization")->capture_default_str();
    app->add_option("--batch-size", batch_size, "data points per iteration")->capture_default_str();
    app->add_option("--block-size", block_size, "random features per iteration")->capture_default_str();
    app->add_option("--seed", seed, "base seed for all randomness")->capture_default_str();
  }

  TrainConfig config(std::uint64_t iterations) const {
    TrainConfig c;
    c.theta = theta;
    c.nu = nu;
    c.batch_size = batch_size;
    c.block_size = block_size;
    c.iterations = iterations;
    c.base_seed = seed;
    return c;
  }
};

Dataset read_data(const std::string& path, const std::string& format) {
  return load_dataset(path, parse_data_format(format));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

// Regression: mean squared error. Classification: error rate.
double holdout_error(const LossSpec& loss, const RowMatrix& scores, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = scores.row(static_cast<Eigen::Index>(i));
    const double y = data.y[i];
    if (loss.kind == LossKind::multiclass_logistic) {
      Eigen::Index best = 0;
      row.maxCoeff(&best);
      sum += static_cast<double>(best) != y;
    } else if (loss.is_classification()) {
      sum += (row(0) >= 0.0 ? 1.0 : -1.0) != y;
    } else {
      sum += (row(0) - y) * (row(0) - y);
    }
  }
  return sum / static_cast<double>(data.size());
}

std::vector<std::uint64_t> doubling_schedule(std::uint64_t T) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t t = 1; t < T; t *= 2) s.push_back(t);
  if (T > 0) s.push_back(T);
  return s;
}

int cmd_train(const std::string& data_path, const std::string& format, const KernelFlags& kf,
              const LossFlags& lf, const SolverFlags& sf, std::uint64_t iters,
              const std::string& model_out, double holdout_fraction, bool average,
              const std::string& metrics_path) {
  Dataset all = read_data(data_path, format);
  Dataset train = all, holdout;
  if (holdout_fraction > 0.0) {
    std::tie(train, holdout) = split(all, holdout_fraction, domain_key(sf.seed, domains::kSplit));
  }
  const KernelSpec kernel = kf.build(train.X, sf.seed);
  const LossSpec loss = lf.build(train);
  TrainConfig cfg = sf.config(iters);
  cfg.averaging = average;
  cfg.eval_schedule = doubling_schedule(iters);

  std::ofstream metrics_file;
  std::ostream* metrics = &std::cout;
  if (!metrics_path.empty()) {
    metrics_file = open_out(metrics_path);
    metrics = &metrics_file;
  }
  Trainer trainer(train, cfg, kernel, loss);
  trainer.run([&](const Trainer& tr) {
    nlohmann::ordered_json j;
    j["iteration"] = tr.model().iterations;
    j["seconds"] = tr.elapsed_seconds();
    j["coefficients"] = tr.model().coefficient_count();
    if (holdout.size() > 0 && loss.kind != LossKind::novelty && loss.kind != LossKind::kl_density_ratio) {
      const Model snap = tr.snapshot();
      j["holdout_error"] = holdout_error(loss, predict(snap, holdout.X), holdout);
      if (average) j["holdout_error_averaged"] = holdout_error(loss, predict_averaged(snap, holdout.X), holdout);
    }
    *metrics << j.dump() << '\n';
  });
  const Model model = trainer.finish();
  save_model(model, model_out);
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& format,
                const std::string& out_path, bool averaged) {
  const Model model = load_model(std::filesystem::path(model_path));
  Dataset data;
  if (parse_data_format(format) == DataFormat::libsvm) {
    std::ifstream in(data_path);
    if (!in) throw DataError("cannot read " + data_path);
    data = parse_libsvm(in, model.dim);
  } else {
    data = read_data(data_path, format);
    if (data.size() == 0) data.X.resize(0, static_cast<Eigen::Index>(model.dim));
  }
  if (data.dim() != model.dim) {
    throw DataError("data has dimension " + std::to_string(data.dim()) + ", model expects " +
                    std::to_string(model.dim));
  }
  const RowMatrix scores = averaged ? predict_averaged(model, data.X) : predict(model, data.X);
  if (out_path.empty() || out_path == "-") {
    write_predictions_csv(scores, std::cout);
  } else {
    auto out = open_out(out_path);
    write_predictions_csv(scores, out);
  }
  return 0;
}

int cmd_synth(std::size_t n, std::uint64_t seed, bool noiseless, const std::string& format,
              const std::string& out_path) {
  const Dataset d = synth_regression(n, seed, noiseless);
  const auto write = [&](std::ostream& out) {
    if (parse_data_format(format) == DataFormat::libsvm) {
      write_libsvm(d, out);
    } else {
      write_csv(d, out);
    }
  };
  if (out_path.empty() || out_path == "-") {
    write(std::cout);
  } else {
    auto out = open_out(out_path);
    write(out);
  }
  return 0;
}

struct GpFlags {
  std::size_t n = 2048;
  std::size_t grid = 1024;
  double sigma2 = 0.1;
  double bandwidth_mult = 1.0;
  std::uint64_t iters = 2048;
  std::size_t batch_size = 64;
  std::size_t block_size = 64;
  std::size_t variance_block = 16;
  std::optional<double> theta;
  std::uint64_t seed = 0;
  std::string nu_rule = "sigma2_over_n";
  std::string out;
};

int cmd_gp(const GpFlags& f) {
  const Dataset data = synth_regression(f.n, f.seed);
  const Dataset grid = synth_regression(f.grid, domain_key(f.seed, domains::kSynth), true);
  RandomStream pairs(domain_key(f.seed, domains::kPairs), 0);
  const KernelSpec kernel = gaussian_kernel(f.bandwidth_mult * median_heuristic(data.X, kMedianPairBudget, pairs));
  GpNuRule rule;
  if (f.nu_rule == "sigma2_over_n") {
    rule = GpNuRule::sigma2_over_n;
  } else if (f.nu_rule == "two_sigma2") {
    rule = GpNuRule::two_sigma2;
  } else {
    throw InvalidArgument("--nu-rule must be sigma2_over_n or two_sigma2");
  }
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.y.data(), static_cast<Eigen::Index>(data.size()));
  const Posterior exact = closed_form_posterior(data.X, y, grid.X, kernel, f.sigma2);

  TrainConfig cfg;
  cfg.theta = f.theta ? *f.theta : 1.0;
  cfg.batch_size = f.batch_size;
  cfg.block_size = f.block_size;
  cfg.iterations = f.iters;
  cfg.base_seed = f.seed;
  const Model mean_model = ds_posterior_mean(data, cfg, kernel, f.sigma2, rule);
  TrainConfig vcfg = cfg;
  vcfg.block_size = f.variance_block;
  const Model var_model = ds_variance_testpoints(data, grid.X, vcfg, kernel, f.sigma2, rule);
  const RowMatrix mean = predict(mean_model, grid.X);
  const VarianceEstimate var = testpoint_variance(var_model, grid.X);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!f.out.empty() && f.out != "-") {
    file = open_out(f.out);
    out = &file;
  }
  *out << "x1,x2,mean_exact,var_exact,mean_est,var_est\n";
  for (Eigen::Index i = 0; i < grid.X.rows(); ++i) {
    *out << format_double(grid.X(i, 0)) << ',' << format_double(grid.X(i, 1)) << ','
         << format_double(exact.mean(i)) << ',' << format_double(exact.variance(i)) << ','
         << format_double(mean(i, 0)) << ',' << format_double(var.variance(i)) << '\n';
  }
  if (var.clamped > 0) std::cerr << "dsgd gp: clamped " << var.clamped << " variance estimates\n";
  return 0;
}

std::size_t expected_memory(const std::string& solver, const Solver& s, const TrainConfig& cfg,
                            const LossSpec& loss, std::size_t dim, std::size_t pegasos_features) {
  const std::size_t t = s.iteration();
  if (solver == "dsgd") return t * cfg.block_size * loss.outputs();
  if (solver == "norma") return t * cfg.batch_size * (dim + 1);
  return pegasos_features * loss.outputs();
}

int cmd_bench(const std::string& data_path, const std::string& format, const KernelFlags& kf,
              const LossFlags& lf, const SolverFlags& sf, const std::vector<std::string>& solvers,
              const std::string& budget, double holdout_fraction, std::size_t pegasos_features,
              const std::string& out_path) {
  Dataset all = data_path.empty() ? synth_regression(4096, sf.seed) : read_data(data_path, format);
  const auto [train, holdout] = split(all, holdout_fraction, domain_key(sf.seed, domains::kSplit));
  const KernelSpec kernel = kf.build(train.X, sf.seed);
  const LossSpec loss = lf.build(train);

  std::optional<double> seconds;
  std::uint64_t iterations = 0;
  if (budget == "one-pass") {
    iterations = (train.size() + sf.batch_size - 1) / sf.batch_size;
  } else if (budget.rfind("seconds:", 0) == 0) {
    seconds = KernelFlags::parse_positive(budget.substr(8), "--budget seconds");
    iterations = std::uint64_t{1} << 40;
  } else {
    throw InvalidArgument("--budget must be one-pass or seconds:<s>");
  }
  const TrainConfig cfg = sf.config(iterations);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty() && out_path != "-") {
    file = open_out(out_path);
    out = &file;
  }
  *out << "solver,iterations,seconds,coefficient_memory,expected_memory,holdout_error\n";
  bool memory_ok = true;
  for (const auto& name : solvers) {
    auto solver = make_solver(name, train, cfg, kernel, loss, pegasos_features);
    const auto start = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    while (solver->iteration() < iterations && !(seconds && elapsed() >= *seconds)) solver->step();
    const double wall = elapsed();
    const double err = holdout_error(loss, solver->predict(holdout.X), holdout);
    const std::size_t mem = solver->coefficient_memory();
    const std::size_t expect = expected_memory(name, *solver, cfg, loss, train.dim(), pegasos_features);
    memory_ok = memory_ok && mem == expect;
    *out << name << ',' << solver->iteration() << ',' << format_double(wall) << ',' << mem << ','
         << expect << ',' << format_double(err) << '\n';
  }
  if (!memory_ok) {
    std::cerr << "dsgd bench: coefficient memory differs from the expected count\n";
    return kExitAuditFailed;
  }
  return 0;
}

struct AuditFlags {
  std::string check = "coefficients";
  std::vector<double> theta_nu{1.0, 1.5, 2.0, 3.0};
  double nu = 1e-2;
  std::uint64_t t_max = 10000;
  std::size_t points = 1000;
  std::uint64_t seed = 0;
};

int cmd_audit(const AuditFlags& f) {
  bool pass = true;
  std::cout << "check,case,measured,bound,pass\n";
  const auto row = [&](const std::string& c, double measured, double bound, bool ok) {
    std::cout << f.check << ',' << c << ',' << format_double(measured) << ',' << format_double(bound) << ','
              << (ok ? "true" : "false") << '\n';
    pass = pass && ok;
  };
  if (f.check == "coefficients") {
    for (double tn : f.theta_nu) {
      const double theta = tn / f.nu;
      const CoefficientAudit a = coefficient_bound_audit(theta, f.nu, f.t_max);
      const std::string c = "theta_nu=" + format_double(tn);
      row(c + " max_excess", a.max_excess, 1e-12, a.max_excess <= 1e-12);
      if (tn == 1.0) row(c + " equality_gap", a.max_equality_gap, 1e-12, a.max_equality_gap <= 1e-12);
    }
  } else if (f.check == "gradients") {
    for (const auto kind : {LossKind::logistic, LossKind::square, LossKind::huber, LossKind::squared_hinge}) {
      const GradientAudit a = finite_difference_audit(make_loss(kind), f.points, f.seed);
      row(std::string(to_string(kind)), a.worst, 1e-5, a.failures == 0);
    }
    const GradientAudit m = finite_difference_audit(multiclass_loss(4), f.points, f.seed);
    row("multiclass_logistic", m.worst, 1e-5, m.failures == 0);
  } else if (f.check == "subgradients") {
    for (const LossSpec& l : {make_loss(LossKind::hinge), eps_insensitive_loss(0.1), quantile_loss(0.3),
                              make_loss(LossKind::squared_hinge)}) {
      const GradientAudit a = subgradient_audit(l, f.points, f.seed);
      row(std::string(to_string(l.kind)), a.worst, 0.0, a.failures == 0);
    }
  } else if (f.check == "hinge") {
    for (const auto& c : hinge_case_audit()) {
      row(c.description, c.observed, c.expected, std::abs(c.observed - c.expected) <= 1e-15);
    }
  } else {
    throw InvalidArgument("--check must be coefficients, gradients, subgradients or hinge");
  }
  return pass ? 0 : kExitAuditFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly stochastic functional gradients for kernel machines"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: DSGD_THREADS, else 1)");

  std::string data_path, format = "libsvm", model_path, out_path, metrics_path;
  KernelFlags kf;
  LossFlags lf;
  SolverFlags sf;
  std::uint64_t iters = 1000;
  double holdout = 0.0;
  bool average = false;

  auto* train = app.add_subcommand("train", "train a model and write the model file");
  train->add_option("--data", data_path, "training data")->required();
  train->add_option("--format", format, "libsvm|csv")->capture_default_str();
  kf.add(train);
  lf.add(train);
  sf.add(train);
  train->add_option("--iters", iters, "iterations")->capture_default_str();
  train->add_option("--model-out", model_path, "model file")->required();
  train->add_option("--holdout", holdout, "holdout fraction for metrics")->check(CLI::Range(0.0, 0.99));
  train->add_flag("--average", average, "keep the averaged iterate");
  train->add_option("--metrics", metrics_path, "JSON-lines metrics file (default stdout)");

  bool use_averaged = false;
  auto* pred = app.add_subcommand("predict", "score data with a saved model");
  pred->add_option("--model", model_path, "model file")->required();
  pred->add_option("--data", data_path, "input data")->required();
  pred->add_option("--format", format, "libsvm|csv")->capture_default_str();
  pred->add_option("--out", out_path, "output CSV (default stdout)");
  pred->add_flag("--averaged", use_averaged, "use the averaged iterate");

  std::size_t synth_n = 1024;
  bool noiseless = false;
  auto* synth = app.add_subcommand("synth", "write the synthetic regression data set");
  synth->add_option("--n", synth_n, "rows")->capture_default_str();
  synth->add_option("--seed", sf.seed, "seed")->capture_default_str();
  synth->add_flag("--noiseless", noiseless, "omit target noise");
  synth->add_option("--format", format, "libsvm|csv")->capture_default_str();
  synth->add_option("--out", out_path, "output file (default stdout)");

  GpFlags gf;
  auto* gp = app.add_subcommand("gp", "closed-form vs doubly stochastic GP posterior on synthetic data");
  gp->add_option("--n", gf.n, "training rows")->capture_default_str();
  gp->add_option("--grid", gf.grid, "test points")->capture_default_str();
  gp->add_option("--sigma2", gf.sigma2, "noise variance")->capture_default_str();
  gp->add_option("--bandwidth-mult", gf.bandwidth_mult, "multiplier on the median distance")->capture_default_str();
  gp->add_option("--iters", gf.iters, "iterations")->capture_default_str();
  gp->add_option("--batch-size", gf.batch_size, "batch size")->capture_default_str();
  gp->add_option("--block-size", gf.block_size, "features per iteration for the mean")->capture_default_str();
  gp->add_option("--variance-block", gf.variance_block, "features per iteration for the variance")
      ->capture_default_str();
  gp->add_option("--theta", gf.theta, "step size numerator (default 1)");
  gp->add_option("--nu-rule", gf.nu_rule, "sigma2_over_n|two_sigma2")->capture_default_str();
  gp->add_option("--seed", gf.seed, "seed")->capture_default_str();
  gp->add_option("--out", gf.out, "output CSV (default stdout)");

  std::vector<std::string> solvers{"dsgd", "norma", "rpegasos"};
  std::string budget = "one-pass";
  std::size_t pegasos_features = 1024;
  double bench_holdout = 0.2;
  auto* bench = app.add_subcommand("bench", "compare solvers under a budget");
  bench->add_option("--data", data_path, "data (default: 4096 synthetic rows)");
  bench->add_option("--format", format, "libsvm|csv")->capture_default_str();
  kf.add(bench);
  lf.add(bench);
  sf.add(bench);
  bench->add_option("--solvers", solvers, "subset of dsgd,norma,rpegasos")
      ->delimiter(',')
      ->check(CLI::IsMember({"dsgd", "norma", "rpegasos"}));
  bench->add_option("--budget", budget, "one-pass|seconds:<s>")->capture_default_str();
  bench->add_option("--holdout", bench_holdout, "holdout fraction")->check(CLI::Range(0.01, 0.99));
  bench->add_option("--pegasos-features", pegasos_features, "r-Pegasos feature count")->capture_default_str();
  bench->add_option("--out", out_path, "output CSV (default stdout)");

  AuditFlags af;
  auto* audit = app.add_subcommand("audit", "numerical audits of coefficients and losses");
  audit->add_option("--check", af.check, "coefficients|gradients|subgradients|hinge")->capture_default_str();
  audit->add_option("--theta-nu", af.theta_nu, "theta * nu values")->delimiter(',');
  audit->add_option("--nu", af.nu, "nu for the coefficient audit")->capture_default_str();
  audit->add_option("--t-max", af.t_max, "largest t")->capture_default_str();
  audit->add_option("--points", af.points, "random points per loss")->capture_default_str();
  audit->add_option("--seed", af.seed, "seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (threads > 0) set_max_threads(threads);
    if (*train) {
      return cmd_train(data_path, format, kf, lf, sf, iters, model_path, holdout, average, metrics_path);
    }
    if (*pred) return cmd_predict(model_path, data_path, format, out_path, use_averaged);
    if (*synth) return cmd_synth(synth_n, sf.seed, noiseless, format, out_path);
    if (*gp) return cmd_gp(gf);
    if (*bench) {
      return cmd_bench(data_path, format, kf, lf, sf, solvers, budget, bench_holdout, pegasos_features,
                       out_path);
    }
    if (*audit) return cmd_audit(af);
  } catch (const InvalidArgument& e) {
    std::cerr << "dsgd: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "dsgd: diverged at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "dsgd: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "dsgd: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "dsgd: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
