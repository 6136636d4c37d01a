#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "dsgd/analysis.hpp"
#include "dsgd/error.hpp"
#include "dsgd/predictor.hpp"
#include "dsgd/trainer.hpp"
#include "helpers.hpp"

using namespace dsgd;

namespace {

Model trained(std::size_t block, std::uint64_t iters, bool averaging = false) {
  RandomStream g(31, block);
  const auto data = testing::random_binary(g, 60, 3);
  TrainConfig cfg;
  cfg.theta = 1.0;
  cfg.nu = 0.5;
  cfg.batch_size = 4;
  cfg.block_size = block;
  cfg.iterations = iters;
  cfg.base_seed = 99;
  cfg.averaging = averaging;
  return train(data, cfg, gaussian_kernel(0.8), make_loss(LossKind::hinge));
}

std::string saved(const Model& m) {
  std::ostringstream out;
  save_model(m, out);
  return out.str();
}

Model loaded(const std::string& bytes) {
  std::istringstream in(bytes);
  return load_model(in);
}

}  // namespace

TEST_CASE("single block prediction matches a hand computation") {
  Model m;
  m.kernel = gaussian_kernel(1.0);
  m.dim = 1;
  m.block_size = 2;
  m.iterations = 1;
  m.base_seed = 5;
  m.scale = 0.5;
  m.coefficients = {0.3, -1.1};
  const auto block = sample_block(m.kernel, 1, 2, 5, 1);
  RowMatrix X(1, 1);
  X << 0.7;
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    expected += m.coefficients[static_cast<std::size_t>(j)] *
                std::cos(block.frequencies(j, 0) * 0.7 + block.offsets(j));  // sqrt(2 / r) = 1
  }
  CHECK(predict(m, X)(0, 0) == doctest::Approx(0.5 * expected).epsilon(1e-15));
}

TEST_CASE("prediction is deterministic, cache-independent and linear") {
  const Model m = trained(8, 25);
  RandomStream g(1, 1);
  const RowMatrix X = testing::random_matrix(g, 30, 3);
  BlockCache cache;
  const RowMatrix a = predict(m, X);
  CHECK(a == predict(m, X));
  CHECK(a == predict(m, X, &cache));
  CHECK(cache.size() == 25);
  CHECK(a == predict(m, X, &cache));
  cache.clear();
  CHECK(a == predict(m, X, &cache));

  Model m1 = m, m2 = m, sum = m;
  for (std::size_t i = 0; i < m.coefficients.size(); ++i) {
    m1.coefficients[i] = g.uniform(-1, 1);
    m2.coefficients[i] = g.uniform(-1, 1);
    sum.coefficients[i] = m1.coefficients[i] + m2.coefficients[i];
  }
  CHECK((predict(sum, X) - predict(m1, X) - predict(m2, X)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(predict(m, RowMatrix::Zero(2, 4)), DataError);
}

TEST_CASE("save and load round trip bit-exactly") {
  for (bool avg : {false, true}) {
    const Model m = trained(32, 20, avg);
    const Model back = loaded(saved(m));
    CHECK(back == m);
    RandomStream g(2, 2);
    const RowMatrix X = testing::random_matrix(g, 15, 3);
    CHECK(predict(back, X) == predict(m, X));
    if (avg) CHECK(predict_averaged(back, X) == predict_averaged(m, X));
  }
  Model novelty = trained(4, 3);
  novelty.tau = -0.125;
  CHECK(loaded(saved(novelty)) == novelty);
  const Model empty = trained(4, 0);
  CHECK(loaded(saved(empty)) == empty);
}

TEST_CASE("corrupted, truncated and foreign files are rejected") {
  const std::string bytes = saved(trained(4, 6));
  testing::for_all(40, 3, [&](RandomStream& g) {
    std::string bad = bytes;
    const auto pos = g.below(bad.size());
    bad[pos] = static_cast<char>(bad[pos] ^ (1 + g.below(255)));
    CHECK_THROWS_AS(loaded(bad), FormatError);
  });
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() - 1}) {
    CHECK_THROWS_AS(loaded(bytes.substr(0, cut)), FormatError);
  }
  std::string version = bytes;
  version[8] = 9;
  try {
    loaded(version);
    FAIL("expected rejection");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("file path round trip") {
  const Model m = trained(32, 10);
  const auto path = std::filesystem::temp_directory_path() / "dsgd_predictor_test.model";
  save_model(m, path);
  const Model back = load_model(path);
  std::filesystem::remove(path);
  RandomStream g(3, 3);
  const RowMatrix fresh = testing::random_matrix(g, 12, 3);
  CHECK(predict(back, fresh) == predict(m, fresh));
  CHECK_THROWS_AS(load_model(std::filesystem::path("/nonexistent/model.bin")), DataError);
}

TEST_CASE("predictions csv") {
  RowMatrix s(2, 1);
  s << 0.1, -2.0;
  std::ostringstream out;
  write_predictions_csv(s, out);
  CHECK(out.str() == "row,score\n0,0.1\n1,-2\n");
  RowMatrix mc(1, 3);
  mc << 1, 2, 3;
  std::ostringstream out2;
  write_predictions_csv(mc, out2);
  CHECK(out2.str() == "row,score_0,score_1,score_2\n0,1,2,3\n");
  std::ostringstream out3;
  write_predictions_csv(RowMatrix(0, 1), out3);
  CHECK(out3.str() == "row,score\n");
}

TEST_CASE("prediction time grows linearly in t") {
  Model base;
  base.kernel = gaussian_kernel(1.0);
  base.dim = 10;
  base.block_size = 64;
  RandomStream g(4, 4);
  const RowMatrix X = testing::random_matrix(g, 200, 10);
  Series series;
  for (std::uint64_t t : {32u, 64u, 128u, 256u, 512u}) {
    Model m = base;
    m.iterations = t;
    m.coefficients.assign(t * 64, 0.01);
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      const RowMatrix p = predict(m, X);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      CHECK(p.allFinite());
    }
    series.push_back({static_cast<double>(t), best});
  }
  const double slope = fit_loglog_slope(series, 0.0);
  CHECK(slope >= 0.8);
  CHECK(slope <= 1.2);
}
