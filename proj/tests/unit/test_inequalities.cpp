#include <cmath>

#include "doctest.h"
#include "mvlab/inequalities.hpp"

using namespace mvlab;
using namespace mvlab::ineq;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }
GaussianLaw g1(double m, double v) { return GaussianLaw(v1(m), Matrix::Constant(1, 1, v)); }

std::vector<double> grid(double a, double b, double h) {
  std::vector<double> t;
  for (int i = 0; a + i * h <= b + 1e-12; ++i) t.push_back(a + i * h);
  return t;
}

}  // namespace

TEST_CASE("decay fit on synthetic series") {
  const auto t = grid(0.0, 3.0, 0.25);
  std::vector<double> v, flat, clipped;
  for (double s : t) {
    v.push_back(5.0 * std::exp(-2.0 * s));
    flat.push_back(0.7);
  }
  auto f = decay_fit(t, v);
  CHECK(f.lambda == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.c == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.points_used == t.size());

  auto c = decay_fit(t, flat);
  CHECK(c.lambda == 0.0);
  CHECK(c.c == doctest::Approx(0.7).epsilon(1e-15));

  // Values at or below the floor are dropped; the rest is still exact.
  const double floor = 5.0 * std::exp(-2.0 * 2.0);
  std::vector<double> kept_t, kept_v;
  for (std::size_t i = 0; i < t.size(); ++i) {
    clipped.push_back(std::max(v[i], floor));
    if (v[i] > floor) {
      kept_t.push_back(t[i]);
      kept_v.push_back(v[i]);
    }
  }
  auto fc = decay_fit(t, clipped, floor);
  auto fk = decay_fit(kept_t, kept_v);
  CHECK(std::abs(fc.lambda - fk.lambda) <= 1e-12);
  CHECK(std::abs(fc.c - fk.c) <= 1e-12);
  CHECK(fc.points_excluded == t.size() - kept_t.size());

  CHECK_THROWS_AS(decay_fit({0, 1}, {1, 0.5}), InvalidArgument);
  CHECK_THROWS_AS(decay_fit({0, 1, 2}, {1, 0.5}), DimensionError);
}

TEST_CASE("OU point-start W2 oracle") {
  for (double s : {0.0, 0.3, 1.0, 4.0}) {
    const double e = std::exp(-s);
    const double expect = measures::gaussian_w2(g1(3 * e, 1 - e * e), g1(0, 1));
    CHECK(ou_point_w2(3.0, 1.0, std::sqrt(2.0), s) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(ou_point_w2(3.0, 1.0, std::sqrt(2.0), 0.0) == doctest::Approx(std::sqrt(10.0)));
}

TEST_CASE("linear moment oracle") {
  const Matrix A = -Matrix::Identity(2, 2), S = std::sqrt(2.0) * Matrix::Identity(2, 2);
  auto st = linear_moment_oracle(A, S, Vector::Zero(2), Matrix::Identity(2, 2), 3.0);
  CHECK(st.mean.norm() == 0.0);
  CHECK((st.cov - Matrix::Identity(2, 2)).norm() < 1e-14);
  for (double t : {0.1, 1.0, 5.0}) {
    Eigen::Vector2d x0(1.5, -2.0);
    auto g = linear_moment_oracle(A, S, x0, Matrix::Zero(2, 2), t);
    CHECK((g.cov - (1 - std::exp(-2 * t)) * Matrix::Identity(2, 2)).norm() < 1e-8);
    CHECK((g.mean - std::exp(-t) * x0).norm() < 1e-8);
  }
  CHECK_THROWS_AS(linear_moment_oracle(A, S, Vector::Zero(2), -Matrix::Identity(2, 2), 1.0), InvalidArgument);
}

TEST_CASE("linear specs are read off builtin models") {
  auto o = linear_spec(coeff::ou(1.0, std::sqrt(2.0)));
  CHECK(o.A(0, 0) == -1.0);
  CHECK(o.S(0, 0) == std::sqrt(2.0));
  auto k = linear_spec(coeff::builtin_model("kinetic_gradient"));
  Matrix A(2, 2);
  A << 0, 1, -1, -1;
  CHECK(k.A == A);
  CHECK(k.S(0, 0) == 0.0);
  CHECK(k.S(1, 0) == std::sqrt(2.0));
  CHECK_THROWS_AS(linear_spec(coeff::exabc(0, 0)), InvalidArgument);
  CHECK_THROWS_AS(linear_spec(coeff::mean_field_linear(1, 0.2, 1)), InvalidArgument);
}

TEST_CASE("entropy decay") {
  const auto times = grid(0.0, 4.0, 0.25);
  auto spec = linear_spec(coeff::ou(1.0, std::sqrt(2.0)));
  auto s = entropy_decay_experiment(spec, g1(3, 1), g1(0, 1), times);
  for (std::size_t i = 0; i < times.size(); ++i)
    CHECK(s.values[i] == doctest::Approx(4.5 * std::exp(-2 * times[i])).epsilon(1e-9));
  REQUIRE(s.fit);
  CHECK(std::abs(s.fit->lambda - 2.0) <= 1e-6);

  auto same = entropy_decay_experiment(spec, g1(0, 1), g1(0, 1), times);
  for (double v : same.values) CHECK(v == 0.0);
  CHECK_FALSE(same.fit);

  auto kin = linear_spec(coeff::builtin_model("kinetic_gradient"));
  Matrix c0(2, 2);
  c0 << 0.5, 0.0, 0.0, 2.0;
  auto ks = entropy_decay_experiment(kin, GaussianLaw(Eigen::Vector2d(2, 1), c0), GaussianLaw::standard(2),
                                     grid(0.0, 10.0, 0.25));
  for (std::size_t i = 1; i < ks.times.size(); ++i)
    if (ks.times[i] > 1.0) CHECK(ks.values[i] < ks.values[i - 1]);
  REQUIRE(ks.fit);
  CHECK(ks.fit->r2 >= 0.9);
}

TEST_CASE("Talagrand check") {
  auto eq = talagrand_check(g1(0, 1), g1(0, 1), 2.0);
  CHECK(eq.equality);
  CHECK(eq.lhs == 0.0);
  CHECK(eq.rhs == 0.0);
  for (double m : {0.1, 1.0, 7.0}) CHECK(std::abs(talagrand_check(g1(m, 1), g1(0, 1), 2.0).ratio - 1.0) <= 1e-12);
  auto w = talagrand_check(g1(0, 4), g1(0, 1), 2.0);
  CHECK(w.lhs == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w.rhs == doctest::Approx(3.0 - std::log(4.0)).epsilon(1e-14));
  CHECK(w.ratio == doctest::Approx(0.6197).epsilon(1e-4));
  CHECK_THROWS_AS(talagrand_check(g1(0, 4), g1(0, 1), 0.0), InvalidArgument);
}

TEST_CASE("semigroup log-Sobolev gap") {
  auto m = coeff::ou(1.0, std::sqrt(2.0));
  const auto frozen = EmpiricalMeasure::dirac(v1(0.0), 1);
  coeff::DissipativityConstants c{0.1, 1.0, 0.0, 0.0, 2.0, 1.0};
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.seed = 3;

  TestFunction constant{"3", [](const Vector&) { return 3.0; }, [](const Vector& x) { return Vector::Zero(x.size()); }};
  auto z = semigroup_lsi_gap(m, frozen, constant, v1(0.0), 0.5, 1000, c, cfg);
  CHECK(z.lhs == 0.0);
  CHECK(z.rhs == 0.0);

  auto bank = lsi_test_bank();
  REQUIRE(bank.size() == 3);
  auto r = semigroup_lsi_gap(m, frozen, bank[0], v1(0.0), 0.5, 20000, c, cfg);
  CHECK(r.lhs > 0.0);
  CHECK(r.holds());
  CHECK(r.t == 0.5);

  // A single step: both sides are O(dt).
  auto one = semigroup_lsi_gap(m, frozen, bank[0], v1(0.0), cfg.dt, 20000, c, cfg);
  CHECK(std::abs(one.lhs) < 0.05);
  CHECK(one.rhs < 0.1);
  CHECK(one.holds());

  for (const auto& f : bank)
    for (double t : {0.1, 1.0}) CHECK(semigroup_lsi_gap(m, frozen, f, v1(0.3), t, 20000, c, cfg).holds());

  TestFunction neg{"sin", [](const Vector& x) { return std::sin(x(0)); }, [](const Vector& x) { return Vector(x.array().cos()); }};
  CHECK_THROWS_AS(semigroup_lsi_gap(m, frozen, neg, v1(0.0), 0.5, 1000, c, cfg), EvaluationError);
}

TEST_CASE("Harnack coupling for OU") {
  coeff::DissipativityConstants c{0.1, 1.0, 0.0, 0.0, 2.0, 1.0};
  CHECK(harnack_p0(c) == 513.0);
  CHECK(harnack_r_bound(c, 1.0, 1.0) == doctest::Approx(std::exp(1.0 / (128.0 * (std::exp(1.0) - 1.0)))).epsilon(1e-14));
  auto m = coeff::ou(1.0, std::sqrt(2.0));
  const auto frozen = EmpiricalMeasure::dirac(v1(0.0), 1);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.seed = 8;
  cfg.record_every = 50;

  auto same = harnack_coupling(m, frozen, c, v1(0.5), v1(0.5), 1.0, 513.0, cfg, 200);
  CHECK(same.r_moment_estimate == 1.0);
  CHECK(same.terminal_gap == 0.0);

  auto r = harnack_coupling(m, frozen, c, v1(1.0), v1(0.0), 1.0, 513.0, cfg, 2000);
  // Additive noise cancels in the gap: gap(T) = e^{-T}(1 - e^{-δ})/(1 - e^{-t₀}).
  const double T = 1.0 - 1e-3;
  const double expect = std::exp(-T) * -std::expm1(-1e-3) / -std::expm1(-1.0);
  CHECK(r.terminal_gap == doctest::Approx(expect).epsilon(0.1));
  CHECK(r.terminal_gap <= 0.05);
  CHECK(r.r_moment_estimate <= r.r_moment_bound);
  CHECK(r.r_moment_estimate >= 1.0);
  CHECK(r.clipped_paths == 0);
  CHECK(r.excluded_paths == 0);
  CHECK(r.times.size() == r.mean_gap.size());
  CHECK(r.times.back() == doctest::Approx(T).epsilon(1e-12));

  double prev = 1e300;
  for (double ds : {1e-1, 1e-2, 1e-3}) {
    auto q = harnack_coupling(m, frozen, c, v1(1.0), v1(0.0), 1.0, 513.0, cfg, 200, {ds, 1e6});
    CHECK(q.terminal_gap < prev);
    prev = q.terminal_gap;
  }
  CHECK_THROWS_AS(harnack_coupling(m, frozen, c, v1(1.0), v1(0.0), 1.0, 10.0, cfg, 200), InvalidArgument);
  coeff::DissipativityConstants narrow = c;
  narrow.delta1 = 1.5;
  CHECK_THROWS_AS(harnack_coupling(m, frozen, narrow, v1(1.0), v1(0.0), 1.0, 1e4, cfg, 200), InvalidArgument);
}

TEST_CASE("W2 decay experiment for OU from a point") {
  auto m = coeff::ou(1.0, std::sqrt(2.0));
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.n_particles = 1024;
  cfg.seed = 2;
  auto mu_inf = measures::sample_gaussian(GaussianLaw::standard(1), 2048, 77);
  const auto times = grid(0.0, 2.5, 0.25);
  auto s = w2_decay_experiment(m, EmpiricalMeasure::dirac(v1(3.0), 1024), mu_inf, cfg, times);
  REQUIRE(s.fit);
  CHECK(s.floor > 0.0);
  CHECK(s.fit->lambda == doctest::Approx(1.0).epsilon(0.15));
  for (std::size_t i = 0; i < times.size(); ++i)
    CHECK(std::abs(s.values[i] - ou_point_w2(3.0, 1.0, std::sqrt(2.0), times[i])) < 0.15);

  // Starting at the target: series sits at the floor and no fit is attempted.
  auto at = w2_decay_experiment(m, mu_inf.subsample(1024, 1), mu_inf, cfg, grid(0.0, 1.0, 0.25));
  CHECK_FALSE(at.fit);
  CHECK_THROWS_AS(w2_decay_experiment(m, mu_inf.subsample(1024, 1), mu_inf, cfg, {0.0, 0.123}), InvalidArgument);
}
