#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mvlab/assignment.hpp"
#include "mvlab/measures.hpp"
#include "mvlab/rng.hpp"

using namespace mvlab;
using namespace mvlab::measures;

namespace {

EmpiricalMeasure cloud(std::initializer_list<std::initializer_list<double>> rows) {
  RowMatrix p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (auto& r : rows) {
    Eigen::Index k = 0;
    for (double v : r) p(i, k++) = v;
    ++i;
  }
  return EmpiricalMeasure(p);
}

EmpiricalMeasure random_cloud(std::size_t n, int d, std::uint64_t seed, double scale = 1.0) {
  rng::Engine e(seed, rng::Stream::test);
  RowMatrix p(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (int k = 0; k < d; ++k) p(i, k) = scale * e.normal();
  return EmpiricalMeasure(p);
}

// Brute force over all permutations; only for tiny clouds.
double w2_bruteforce(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      c += (a.particle(i) - b.particle(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / a.size());
}

}  // namespace

TEST_CASE("w2_exact small cases") {
  CHECK(w2_exact(cloud({{0}, {1}}), cloud({{2}, {3}})) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(w2_exact(cloud({{1, 2}}), cloud({{4, 6}})) == doctest::Approx(5.0).epsilon(1e-15));
  auto a = random_cloud(20, 3, 1);
  CHECK(w2_exact(a, a) == 0.0);
}

TEST_CASE("assignment solver agrees with brute force") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const std::size_t n = 2 + s % 6;
    auto a = random_cloud(n, 2, 100 + s);
    auto b = random_cloud(n, 2, 200 + s, 2.0);
    CHECK(w2_exact(a, b) == doctest::Approx(w2_bruteforce(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("assignment solver agrees with sorting in 1D") {
  auto a = random_cloud(64, 1, 5);
  auto b = random_cloud(64, 1, 6, 3.0);
  CostMatrix c(64, 64);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const long double d = a.points()(i, 0) - b.points()(j, 0);
      c(i, j) = d * d;
    }
  const double via_assign = std::sqrt(static_cast<double>(solve_assignment(c).total_cost / 64));
  CHECK(via_assign == doctest::Approx(w2_exact(a, b)).epsilon(1e-12));
}

TEST_CASE("w2_exact is a metric") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto a = random_cloud(24, 2, 10 * s + 1);
    auto b = random_cloud(24, 2, 10 * s + 2, 1.5);
    auto c = random_cloud(24, 2, 10 * s + 3, 0.5);
    const double ab = w2_exact(a, b), ba = w2_exact(b, a), bc = w2_exact(b, c), ac = w2_exact(a, c);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(ac <= ab + bc + 1e-12);
    CHECK(ab > 0);
  }
  // Zero on equal multisets regardless of order.
  auto a = cloud({{1, 0}, {0, 1}, {2, 2}});
  auto b = cloud({{2, 2}, {1, 0}, {0, 1}});
  CHECK(w2_exact(a, b) == 0.0);
}

TEST_CASE("w2_exact rejects size mismatch and oversize clouds") {
  CHECK_THROWS_AS(w2_exact(random_cloud(3, 2, 1), random_cloud(4, 2, 1)), DimensionError);
  CHECK_THROWS_AS(w2_exact(random_cloud(20, 2, 1), random_cloud(20, 2, 2), 10), InvalidArgument);
}

TEST_CASE("w2_sliced") {
  auto a = random_cloud(50, 1, 1);
  auto b = random_cloud(50, 1, 2, 2.0);
  CHECK(std::abs(w2_sliced(a, b, 7, 3) - w2_exact(a, b)) <= 1e-12);
  CHECK(w2_sliced(a, a, 5, 3) == 0.0);
  CHECK_THROWS_AS(w2_sliced(a, b, 0, 3), InvalidArgument);

  for (std::uint64_t s = 0; s < 5; ++s) {
    auto p = random_cloud(64, 2, 30 + s);
    auto q = random_cloud(64, 2, 40 + s, 1.7);
    CHECK(w2_sliced(p, q, 50, s) <= w2_exact(p, q) * (1 + 1e-9));
  }

  // Shift by (3,0): sliced value is at most 3 and the exact distance is close to 3.
  auto n = random_cloud(256, 2, 77);
  RowMatrix shifted = n.points();
  shifted.col(0).array() += 3.0;
  EmpiricalMeasure m(shifted);
  const double ex = w2_exact(n, m);
  CHECK(ex == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(w2_sliced(n, m, 100, 9) <= 3.0 + 1e-12);
}

TEST_CASE("gaussian_w2 closed forms") {
  GaussianLaw a(Vector::Zero(1), Matrix::Identity(1, 1));
  GaussianLaw b(Vector::Constant(1, 3.0), Matrix::Identity(1, 1));
  GaussianLaw c(Vector::Zero(1), Matrix::Constant(1, 1, 4.0));
  CHECK(gaussian_w2(a, a) == 0.0);
  CHECK(gaussian_w2(a, b) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(gaussian_w2(a, c) == doctest::Approx(1.0).epsilon(1e-15));

  // Commuting covariances in 2D reduce to per-axis formulas.
  Matrix s1 = Vector(Eigen::Vector2d(1.0, 9.0)).asDiagonal();
  Matrix s2 = Vector(Eigen::Vector2d(4.0, 1.0)).asDiagonal();
  GaussianLaw p(Eigen::Vector2d(1, 0), s1), q(Eigen::Vector2d(0, 0), s2);
  CHECK(gaussian_w2(p, q) == doctest::Approx(std::sqrt(1.0 + 1.0 + 4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(GaussianLaw(Vector::Zero(1), Matrix::Constant(1, 1, -1.0)), InvalidArgument);
}

TEST_CASE("gaussian_kl closed forms") {
  GaussianLaw std1(Vector::Zero(1), Matrix::Identity(1, 1));
  GaussianLaw shifted(Vector::Constant(1, 1.0), Matrix::Identity(1, 1));
  GaussianLaw wide(Vector::Zero(1), Matrix::Constant(1, 1, 2.0));
  CHECK(gaussian_kl(std1, std1) == 0.0);
  CHECK(gaussian_kl(shifted, std1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gaussian_kl(wide, std1) == doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))).epsilon(1e-14));
  GaussianLaw singular(Eigen::Vector2d(0, 0), Eigen::Matrix2d::Zero());
  GaussianLaw std2 = GaussianLaw::standard(2);
  CHECK_THROWS_AS(gaussian_kl(std2, singular), InfiniteEntropy);
  CHECK(std::isinf(gaussian_kl(singular, std2)));
}

TEST_CASE("gaussian Talagrand inequality with constant 2 lambda_max") {
  rng::Engine e(17, rng::Stream::test);
  for (int i = 0; i < 200; ++i) {
    Eigen::Matrix2d A, B;
    A << e.normal(), e.normal(), e.normal(), e.normal();
    B << e.normal(), e.normal(), e.normal(), e.normal();
    Matrix sa = A * A.transpose() + 0.1 * Eigen::Matrix2d::Identity();
    Matrix sb = B * B.transpose() + 0.1 * Eigen::Matrix2d::Identity();
    GaussianLaw a(Eigen::Vector2d(e.normal(), e.normal()), sa);
    GaussianLaw b(Eigen::Vector2d(e.normal(), e.normal()), sb);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sb);
    const double w = gaussian_w2(a, b);
    CHECK(gaussian_kl(a, b) >= w * w / (2 * es.eigenvalues().maxCoeff()) - 1e-12);
  }
}

TEST_CASE("moment_match") {
  auto g = moment_match(cloud({{-1}, {1}}));
  CHECK(g.mean(0) == 0.0);
  CHECK(g.cov(0, 0) == 1.0);
  auto h = moment_match(cloud({{2.5, -1}, {2.5, -1}}));
  CHECK(h.mean(0) == 2.5);
  CHECK(h.cov.isZero(0.0));
  auto big = sample_gaussian(GaussianLaw::standard(2), 100000, 4);
  auto m = moment_match(big);
  CHECK((m.cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.05);
  CHECK_THROWS_AS(moment_match(cloud({{1}})), InvalidArgument);
}

TEST_CASE("gaussian_w2 matches exact W2 on Gaussian samples") {
  GaussianLaw a(Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity());
  Eigen::Matrix2d sb;
  sb << 2.0, 0.5, 0.5, 1.0;
  GaussianLaw b(Eigen::Vector2d(1.5, -0.5), sb);
  const double target = gaussian_w2(a, b);
  std::vector<double> est;
  for (std::uint64_t r = 0; r < 8; ++r)
    est.push_back(w2_exact(sample_gaussian(a, 256, 1000 + r), sample_gaussian(b, 256, 2000 + r)));
  const double mean = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
  double var = 0;
  for (double v : est) var += (v - mean) * (v - mean);
  var /= (est.size() - 1);
  // Empirical W2 is biased upward at finite N; the bias is O(N^-1/2) in 2D.
  CHECK(mean >= target - 3 * std::sqrt(var / est.size()));
  CHECK(mean <= target + 0.25);
}

TEST_CASE("exp_quadratic_moment") {
  CHECK(exp_quadratic_moment(cloud({{0}, {0}}), 1.0).estimate == 1.0);
  CHECK(exp_quadratic_moment(cloud({{1}, {-1}}), 1.0).estimate == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  auto n = sample_gaussian(GaussianLaw::standard(1), 200000, 9);
  auto r = exp_quadratic_moment(n, 0.25);
  CHECK(r.trace.size() == n.size());
  // Variance of e^{x^2/4} is (1-1)^{-1/2} - 2 = infinite at eps=1/4; use a loose band.
  CHECK(r.estimate == doctest::Approx(std::sqrt(2.0)).epsilon(0.02));
  auto o = exp_quadratic_moment(cloud({{100}, {0}}), 1.0);
  CHECK(o.overflow);
  CHECK(std::isinf(o.estimate));
  CHECK_THROWS_AS(exp_quadratic_moment(n, 0.0), InvalidArgument);
}

TEST_CASE("cloud csv round trip is bit exact") {
  auto a = random_cloud(33, 3, 8, 1e3);
  auto b = from_csv(to_csv(a));
  CHECK(a.points() == b.points());
  CHECK(to_csv(a).rfind("x1,x2,x3\r\n", 0) == 0);
  CHECK_THROWS_AS(from_csv("a,b\r\n1,2\r\n"), IoError);
  CHECK_THROWS_AS(from_csv("x1,x2\r\n1\r\n"), IoError);
}

TEST_CASE("subsample is seeded and without replacement") {
  auto a = random_cloud(1000, 2, 3);
  auto s1 = a.subsample(100, 7), s2 = a.subsample(100, 7), s3 = a.subsample(100, 8);
  CHECK(s1.points() == s2.points());
  CHECK(s1.points() != s3.points());
  CHECK(a.subsample(5000, 7).points() == a.points());
}
