#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "dsgd/error.hpp"
#include "dsgd/features.hpp"
#include "dsgd/gp_posterior.hpp"
#include "helpers.hpp"

using namespace dsgd;

namespace {

std::vector<KernelSpec> random_families() {
  return {gaussian_kernel(0.8),    laplacian_kernel(1.3), cauchy_kernel(0.9),
          hellinger_kernel(),      arc_cosine_kernel(0),  arc_cosine_kernel(1),
          polynomial_kernel(2, 0.5, 32), polynomial_kernel(3, 1.0, 64)};
}

double dot(const RowMatrix& a, const RowMatrix& b, Eigen::Index i) { return a.row(i).dot(b.row(i)); }

}  // namespace

TEST_CASE("kernel family names round trip and unknown names are rejected") {
  for (auto f : {KernelFamily::gaussian, KernelFamily::laplacian, KernelFamily::cauchy,
                 KernelFamily::hellinger, KernelFamily::arc_cosine, KernelFamily::polynomial_sketch,
                 KernelFamily::linear}) {
    CHECK(parse_kernel_family(to_string(f)) == f);
  }
  try {
    parse_kernel_family("matern");
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("matern") != std::string::npos);
  }
}

TEST_CASE("kernel spec validation") {
  CHECK_THROWS_AS(gaussian_kernel(0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(gaussian_kernel(-1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(polynomial_kernel(0, 0.0, 8).validate(), InvalidArgument);
  CHECK_THROWS_AS(polynomial_kernel(2, 0.0, 0).validate(), InvalidArgument);
  CHECK_THROWS_AS(polynomial_kernel(2, -1.0, 8).validate(), InvalidArgument);
  CHECK_THROWS_AS(arc_cosine_kernel(2).validate(), InvalidArgument);
}

TEST_CASE("exact kernel closed forms") {
  const std::vector<double> x{0.3, -1.2}, same = x;
  CHECK(exact_kernel(gaussian_kernel(1.7), x, same) == 1.0);
  const double s = 0.7;
  const std::vector<double> a{0.0, 0.0}, b{s * std::sqrt(2.0), 0.0};
  CHECK(exact_kernel(gaussian_kernel(s), a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(exact_kernel(polynomial_kernel(2, 0.0, 8), std::vector<double>{1, 0}, std::vector<double>{1, 0}) == 1.0);
  CHECK(exact_kernel(laplacian_kernel(2.0), std::vector<double>{1, 1}, std::vector<double>{0, -1}) ==
        doctest::Approx(std::exp(-1.5)));
  CHECK(exact_kernel(cauchy_kernel(1.0), std::vector<double>{1, 0}, std::vector<double>{0, 0}) ==
        doctest::Approx(0.5));
  CHECK(exact_kernel(hellinger_kernel(), std::vector<double>{4, 1}, std::vector<double>{1, 9}) ==
        doctest::Approx(5.0));
  CHECK_THROWS_AS(exact_kernel(hellinger_kernel(), std::vector<double>{-1, 1}, std::vector<double>{1, 1}),
                  InvalidArgument);
  // Orthogonal unit vectors: J_0 = pi/2, J_1 = 1.
  const std::vector<double> e1{1, 0}, e2{0, 1};
  CHECK(exact_kernel(arc_cosine_kernel(0), e1, e2) == doctest::Approx(0.5));
  CHECK(exact_kernel(arc_cosine_kernel(1), e1, e2) == doctest::Approx(1.0 / std::numbers::pi));
  CHECK(exact_kernel(arc_cosine_kernel(1), e1, e1) == doctest::Approx(1.0));
  CHECK(exact_kernel(linear_kernel(), std::vector<double>{2, 3}, std::vector<double>{-1, 4}) == 10.0);
}

TEST_CASE("exact kernels are symmetric and positive semidefinite on small sets") {
  testing::for_all(5, 2, [](RandomStream& g) {
    const RowMatrix P = testing::random_matrix(g, 10, 3, 0.0, 2.0);
    for (const auto& spec : random_families()) {
      const Eigen::MatrixXd K = kernel_matrix(spec, P, P);
      CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
  });
}

TEST_CASE("sample_block shapes and regeneration") {
  const auto b = sample_block(gaussian_kernel(1.0), 2, 4, 9, 3);
  CHECK(b.frequencies.rows() == 4);
  CHECK(b.frequencies.cols() == 2);
  CHECK(b.offsets.size() == 4);
  CHECK((b.offsets.array() >= 0.0).all());
  CHECK((b.offsets.array() < 2 * std::numbers::pi).all());
  for (const auto& spec : random_families()) {
    CHECK(sample_block(spec, 3, 17, 5, 2) == sample_block(spec, 3, 17, 5, 2));
    CHECK(!(sample_block(spec, 3, 17, 5, 2) == sample_block(spec, 3, 17, 5, 3)));
  }
  CHECK_THROWS_AS(sample_block(gaussian_kernel(1.0), 0, 4, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(sample_block(gaussian_kernel(1.0), 2, 0, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(sample_block(linear_kernel(), 2, 3, 1, 1), InvalidArgument);
}

TEST_CASE("hellinger sign rows are +-1") {
  testing::for_all(10, 3, [](RandomStream& g) {
    const auto b = sample_block(hellinger_kernel(), 4, 50, g.next_u64(), g.below(100));
    CHECK((b.sign_rows.array().abs() == 1.0).all());
  });
}

TEST_CASE("gaussian frequencies have identity covariance") {
  const auto b = sample_block(gaussian_kernel(1.0), 2, 100000, 17, 1);
  const Eigen::MatrixXd W = b.frequencies;
  const Eigen::RowVectorXd mean = W.colwise().mean();
  const Eigen::MatrixXd C = (W.rowwise() - mean).transpose() * (W.rowwise() - mean) / (W.rows() - 1.0);
  CHECK((C - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("features of a smaller block are a prefix of a larger one") {
  for (const auto& spec : random_families()) {
    if (spec.family == KernelFamily::polynomial_sketch) continue;  // scaling is per-width
    const auto small = sample_block(spec, 3, 5, 4, 2);
    const auto big = sample_block(spec, 3, 9, 4, 2);
    if (small.frequencies.size()) CHECK(big.frequencies.topRows(5) == small.frequencies);
    if (small.offsets.size()) CHECK(big.offsets.head(5) == small.offsets);
    if (small.sign_rows.size()) CHECK(big.sign_rows.topRows(5) == small.sign_rows);
  }
}

TEST_CASE("featurize shape, purity and errors") {
  RandomStream g(1, 1);
  const RowMatrix X = testing::random_matrix(g, 3, 2, 0.0, 1.0);
  for (const auto& spec : random_families()) {
    const auto b = sample_block(spec, 2, 4, 8, 1);
    const RowMatrix a = featurize(b, spec, X);
    CHECK(a.rows() == 3);
    CHECK(a.cols() == 4);
    CHECK(a == featurize(b, spec, X));
    CHECK_THROWS_AS(featurize(b, spec, RowMatrix::Zero(3, 5)), InvalidArgument);
  }
  const auto hb = sample_block(hellinger_kernel(), 2, 4, 8, 1);
  CHECK_THROWS_AS(featurize(hb, hellinger_kernel(), RowMatrix::Constant(1, 2, -0.5)), InvalidArgument);
  const RowMatrix lin = featurize(sample_block(linear_kernel(), 2, 2, 0, 1), linear_kernel(), X);
  CHECK(lin == X);
}

TEST_CASE("cosine features are bounded by 2 per feature pair") {
  testing::for_all(5, 4, [](RandomStream& g) {
    const RowMatrix X = testing::random_matrix(g, 20, 3, -3, 3);
    for (const auto& spec : {gaussian_kernel(0.5), laplacian_kernel(1.0), cauchy_kernel(2.0)}) {
      const std::size_t r = 64;
      const RowMatrix P = featurize(sample_block(spec, 3, r, g.next_u64(), 1), spec, X);
      // Block scaling is 1/sqrt(r); undo it per feature.
      CHECK((P.array().square() * static_cast<double>(r)).maxCoeff() <= 2.0 + 1e-12);
    }
  });
}

TEST_CASE("gaussian monte carlo estimate within 5/sqrt(r) at r = 1e5") {
  RandomStream g(21, 0);
  const RowMatrix A = testing::random_matrix(g, 100, 3, -1, 1);
  const RowMatrix B = testing::random_matrix(g, 100, 3, -1, 1);
  const auto spec = gaussian_kernel(1.0);
  const std::size_t r = 100000;
  const auto block = sample_block(spec, 3, r, 77, 1);
  const RowMatrix pa = featurize(block, spec, A), pb = featurize(block, spec, B);
  for (Eigen::Index i = 0; i < 100; ++i) {
    const double exact = exact_kernel(spec, {A.row(i).data(), 3}, {B.row(i).data(), 3});
    CHECK(std::abs(dot(pa, pb, i) - exact) <= 5.0 / std::sqrt(static_cast<double>(r)));
  }
}

TEST_CASE("tensor sketch") {
  const auto spec = polynomial_kernel(2, 0.0, 64);
  const auto block = sample_block(spec, 5, 64, 1, 1);
  const std::vector<double> zero(5, 0.0);
  const auto sk = tensor_sketch(zero, spec, block);
  CHECK(sk.size() == 64);
  for (double v : sk) CHECK(v == 0.0);

  // p = 1: a single count sketch; inner products unbiased for <x, x'> + c.
  const auto lin = polynomial_kernel(1, 0.5, 16);
  const std::vector<double> x{0.5, -1.0, 2.0}, xp{1.0, 0.25, -0.5};
  const double target = 0.5 - 0.25 - 1.0 + 0.5;
  double sum = 0.0, sum2 = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    const auto b = sample_block(lin, 3, 16, static_cast<std::uint64_t>(s), 1);
    const auto a = tensor_sketch(x, lin, b), c = tensor_sketch(xp, lin, b);
    double ip = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ip += a[i] * c[i];
    sum += ip;
    sum2 += ip * ip;
  }
  const double mean = sum / seeds;
  const double se = std::sqrt((sum2 / seeds - mean * mean) / seeds);
  CHECK(std::abs(mean - target) <= 3.0 * se);
}

TEST_CASE("median heuristic") {
  RandomStream s(3, 0);
  RowMatrix two(2, 2);
  two << 0, 0, 3, 0;
  CHECK(median_heuristic(two, 100, s) == 3.0);
  CHECK(median_heuristic(RowMatrix::Ones(5, 2), 100, s) == 0.0);
  CHECK_THROWS_AS(median_heuristic(RowMatrix::Ones(1, 2), 100, s), InvalidArgument);

  RandomStream g(8, 0);
  RowMatrix P(1000, 2);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = g.normal();
  // Difference of two N(0, I_2) points is sqrt(2) chi_2; median of chi_2 is sqrt(2 ln 2).
  const double theory = std::sqrt(2.0) * std::sqrt(2.0 * std::log(2.0));
  RandomStream pairs(9, 0);
  CHECK(std::abs(median_heuristic(P, 20000, pairs) / theory - 1.0) <= 0.1);
}
