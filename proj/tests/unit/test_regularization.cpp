#include <cmath>

#include "doctest.h"
#include "mvlab/simulator.hpp"

using namespace mvlab;
using namespace mvlab::sim;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

DriftFn scalar(double (*f)(double)) {
  return [f](double, ConstVecRef x, VecRef out) {
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = f(x(i));
  };
}

double eval(const DriftFn& b, double x) {
  Vector out(1);
  b(0.0, v1(x), out);
  return out(0);
}

// Root of y + y³ = x by bisection.
double cubic_root(double x) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid + mid * mid * mid < x ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

coeff::CoefficientModel one_dim(std::string name, double (*f)(double)) {
  return coeff::make_model(
      std::move(name), 1, 1,
      [f](double, ConstVecRef x, const measures::EmpiricalMeasure&, VecRef out) { out(0) = f(x(0)); },
      [](double, const measures::EmpiricalMeasure&) { return Matrix::Constant(1, 1, 1.0); }, false);
}

}  // namespace

TEST_CASE("Yosida approximation of a linear drift") {
  const auto lin = scalar([](double x) { return -x; });
  CHECK(eval(yosida_drift(lin, 1, 1.0, {}), 2.0) == doctest::Approx(-1.0).epsilon(1e-14));
  for (double n : {1.0, 3.0, 10.0, 1000.0})
    for (double x : {-5.0, -0.3, 0.0, 1.7, 40.0})
      CHECK(std::abs(eval(yosida_drift(lin, 1, n, {}), x) + n * x / (n + 1)) <= 1e-12 * std::max(1.0, std::abs(x)));
  // Shifted by K: b = -x + K/2 x gives b̃ = -x, result -n x/(n+1) + K x/2.
  const double K = 0.8;
  const auto shifted = scalar([](double x) { return -x + 0.4 * x; });
  auto y = yosida_drift(shifted, 1, 2.0, [K](double) { return K; });
  CHECK(eval(y, 3.0) == doctest::Approx(-2.0 * 3.0 / 3.0 + 0.4 * 3.0).epsilon(1e-12));
}

TEST_CASE("Yosida approximation of a cubic drift") {
  const auto cube = scalar([](double x) { return -x * x * x; });
  auto y = yosida_drift(cube, 1, 1.0, {});
  CHECK(eval(y, 1.0) == doctest::Approx(cubic_root(1.0) - 1.0).epsilon(1e-10));
  CHECK(eval(y, 1.0) == doctest::Approx(-0.3176722).epsilon(1e-6));
  CHECK(eval(y, 0.0) == 0.0);
  // Resolvent value bound |b̂ⁿ(0)| <= |b̂(0)| for a drift with b(0) != 0.
  const auto off = scalar([](double x) { return 1.5 - x * x * x; });
  CHECK(std::abs(eval(yosida_drift(off, 1, 4.0, {}), 0.0)) <= 1.5);
}

TEST_CASE("Yosida output is one-sided Lipschitz with K and Lipschitz with 2n + K/2") {
  // Double-well drift satisfies 2<b(x)-b(y), x-y> <= 4|x-y|².
  const double K = 4.0;
  DriftFn dw = [](double, ConstVecRef x, VecRef out) { out = (2.0 - 4.0 * x.squaredNorm()) * x; };
  for (double n : {1.0, 5.0}) {
    auto y = yosida_drift(dw, 2, n, [K](double) { return K; });
    rng::Engine e(static_cast<std::uint64_t>(n), rng::Stream::test);
    Vector a(2), b(2), ya(2), yb(2);
    for (int i = 0; i < 300; ++i) {
      a << 3 * e.normal(), 3 * e.normal();
      b << 3 * e.normal(), 3 * e.normal();
      y(0.0, a, ya);
      y(0.0, b, yb);
      const double d2 = (a - b).squaredNorm();
      CHECK(2 * (ya - yb).dot(a - b) <= K * d2 + 1e-8);
      CHECK((ya - yb).norm() <= (2 * n + 0.5 * K) * std::sqrt(d2) + 1e-8);
    }
  }
}

TEST_CASE("Yosida reports non-convergence with the point and level") {
  const auto bad = scalar([](double x) { return x + 5.0; });
  try {
    eval(yosida_drift(bad, 1, 1.0, {}), 1.0);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("x=(1)") != std::string::npos);
    CHECK(msg.find("n=1") != std::string::npos);
  }
  CHECK_THROWS_AS(yosida_drift(bad, 1, 0.5, {}), InvalidArgument);
}

TEST_CASE("mollifier rules integrate to one") {
  for (auto rho : {Mollifier::uniform, Mollifier::bump})
    for (int d : {1, 2}) {
      auto r = mollifier_rule(rho, d);
      CHECK(r.mass == doctest::Approx(1.0).epsilon(1e-8));
      double s = 0;
      for (double w : r.weights) s += w;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
  CHECK(mollifier_rule(Mollifier::uniform, 1).first_abs_moment == doctest::Approx(0.5).epsilon(1e-12));
  // MC rule for d > 2 is seeded and reproducible.
  auto a = mollifier_rule(Mollifier::uniform, 3, {2, 2000, 7});
  auto b = mollifier_rule(Mollifier::uniform, 3, {2, 2000, 7});
  CHECK(a.nodes == b.nodes);
  CHECK(a.mass == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(mollifier_rule(Mollifier::bump, 1, {0, 10, 0}), InvalidArgument);
}

TEST_CASE("mollified drifts") {
  const auto absf = scalar([](double x) { return std::abs(x); });
  for (double m : {1.0, 2.0, 8.0})
    CHECK(eval(mollify_drift(absf, 1, m, Mollifier::uniform), 0.0) == doctest::Approx(1.0 / (2 * m)).epsilon(1e-12));

  const auto id = scalar([](double x) { return x; });
  for (auto rho : {Mollifier::uniform, Mollifier::bump})
    for (double x : {-3.0, 0.25, 7.0}) CHECK(eval(mollify_drift(id, 1, 3.0, rho), x) == doctest::Approx(x).epsilon(1e-13));

  const auto s = scalar([](double x) { return std::sin(x); });
  for (auto rho : {Mollifier::uniform, Mollifier::bump})
    for (double m : {1.0, 4.0}) {
      const double bound = mollifier_rule(rho, 1).first_abs_moment / m + 1e-8;
      auto bm = mollify_drift(s, 1, m, rho);
      double worst = 0.0;
      for (int i = 0; i < 10000; ++i) {
        const double x = -5.0 + 10.0 * i / 9999.0;
        worst = std::max(worst, std::abs(eval(bm, x) - std::sin(x)));
      }
      CHECK(worst <= bound);
    }
}

TEST_CASE("regularization convergence") {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_end = 1.0;
  cfg.n_particles = 400;
  cfg.seed = 4;
  auto init = measures::sample_gaussian(measures::GaussianLaw(v1(1.0), Matrix::Identity(1, 1)), 400, 2);

  SUBCASE("Yosida levels on a linear drift") {
    auto m = coeff::ou(1.0, std::sqrt(2.0));
    std::vector<Regularization> lv;
    lv.push_back({});
    for (double n : {1.0, 10.0, 100.0}) lv.push_back({Regularization::Kind::yosida, n, 0.0});
    auto rows = regularization_convergence(m, lv, init, cfg);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].ms_gap == 0.0);
    CHECK(rows[1].rms_gap > rows[2].rms_gap);
    CHECK(rows[2].rms_gap > rows[3].rms_gap);
    // Drift error 1/(n+1): a decade in n is about a decade in the gap.
    CHECK(rows[2].rms_gap / rows[3].rms_gap == doctest::Approx(101.0 / 11.0).epsilon(0.15));
  }
  SUBCASE("mollified levels on a Lipschitz drift") {
    auto m = one_dim("wavy", [](double x) { return -x + std::sin(3 * x); });
    std::vector<Regularization> lv;
    for (double level : {1.0, 4.0, 16.0}) {
      Regularization r;
      r.kind = Regularization::Kind::mollified;
      r.level = level;
      lv.push_back(r);
    }
    auto rows = regularization_convergence(m, lv, init, cfg);
    CHECK(rows[0].rms_gap > rows[1].rms_gap);
    CHECK(rows[1].rms_gap > rows[2].rms_gap);
    CHECK(rows[2].label == "mollified_uniform(m=16)");
  }
}
