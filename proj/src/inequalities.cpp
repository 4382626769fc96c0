#include "mvlab/inequalities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace mvlab::ineq {

namespace {

constexpr std::uint64_t kSubsampleSalt = 0x77D1u;

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

// Fixed-order mean and sample standard deviation, shifted by the first value.
MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd r;
  if (v.empty()) return r;
  const double shift = v[0];
  long double s = 0, s2 = 0;
  for (double x : v) {
    const long double d = x - shift;
    s += d;
    s2 += d * d;
  }
  const auto n = static_cast<long double>(v.size());
  const long double md = s / n;
  r.mean = static_cast<double>(shift + md);
  if (v.size() > 1) r.sd = static_cast<double>(std::sqrt(std::max(0.0L, (s2 - n * md * md) / (n - 1))));
  return r;
}

}  // namespace

DecayFit decay_fit(const std::vector<double>& times, const std::vector<double>& values, double floor) {
  if (times.size() != values.size()) throw DimensionError("decay_fit: series lengths differ");
  std::vector<double> t, y;
  DecayFit f;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || std::isnan(values[i])) throw InvalidArgument("decay_fit: non-finite series entry");
    if (values[i] > floor && std::isfinite(values[i])) {
      t.push_back(times[i]);
      y.push_back(std::log(values[i]));
    } else {
      ++f.points_excluded;
    }
  }
  f.points_used = t.size();
  if (t.size() < 3)
    throw InvalidArgument("decay_fit: need at least 3 points above the floor, got " + std::to_string(t.size()));
  long double tb = 0, yb = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tb += t[i];
    yb += y[i];
  }
  tb /= t.size();
  yb /= t.size();
  long double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxx += (t[i] - tb) * (t[i] - tb);
    sxy += (t[i] - tb) * (y[i] - yb);
    syy += (y[i] - yb) * (y[i] - yb);
  }
  if (sxx == 0) throw InvalidArgument("decay_fit: all usable points share one time");
  const long double slope = sxy / sxx;
  f.lambda = static_cast<double>(-slope);
  f.c = static_cast<double>(std::exp(yb - slope * tb));
  f.r2 = syy == 0 ? 1.0 : static_cast<double>(std::clamp(sxy * sxy / (sxx * syy), 0.0L, 1.0L));
  return f;
}

DecaySeries w2_decay_experiment(const CoefficientModel& m, const EmpiricalMeasure& mu0,
                                const EmpiricalMeasure& mu_inf, const SimConfig& cfg,
                                const std::vector<double>& sample_times, std::size_t cap) {
  cfg.validate();
  if (sample_times.empty()) throw InvalidArgument("w2_decay_experiment: no sample times");
  if (mu_inf.dim() != m.dim) throw DimensionError("w2_decay_experiment: mu_inf has the wrong dimension");
  std::vector<std::uint64_t> steps;
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    const double t = sample_times[i];
    const double k = std::round(t / cfg.dt);
    if (!(t >= 0) || std::abs(k * cfg.dt - t) > 1e-9 * std::max(1.0, t))
      throw InvalidArgument("sample time " + std::to_string(t) + " is not on the dt grid");
    if (i > 0 && !(t > sample_times[i - 1])) throw InvalidArgument("sample times must be increasing");
    steps.push_back(static_cast<std::uint64_t>(k));
  }
  DecaySeries s;
  s.times = sample_times;
  s.values.assign(sample_times.size(), 0.0);

  const std::size_t n = std::min({cap, mu_inf.size(), mu0.size()});
  const std::uint64_t sub_seed = cfg.seed ^ kSubsampleSalt;
  const auto target = mu_inf.subsample(n, sub_seed);
  if (mu_inf.size() >= 2) {
    const std::size_t half = std::min(n, mu_inf.size() / 2);
    const RowMatrix both = mu_inf.subsample(2 * half, sub_seed + 1).points();
    s.floor = measures::w2_exact(EmpiricalMeasure(both.topRows(static_cast<Eigen::Index>(half))),
                                 EmpiricalMeasure(both.bottomRows(static_cast<Eigen::Index>(half))), cap);
  }

  SimConfig c = cfg;
  c.record_every = 1;
  c.t_end = std::max(static_cast<double>(steps.back()) * cfg.dt, 2.0 * cfg.dt);
  std::size_t next = 0;
  sim::simulate_mean_field(m, mu0, c, [&](double t, const RowMatrix& x) {
    if (next >= steps.size()) return;
    if (static_cast<std::uint64_t>(std::llround(t / cfg.dt)) != steps[next]) return;
    s.values[next++] = measures::w2_exact(EmpiricalMeasure(x).subsample(n, sub_seed), target, cap);
  });
  const auto usable = std::count_if(s.values.begin(), s.values.end(), [&](double v) { return v > s.floor; });
  if (usable >= 3) s.fit = decay_fit(s.times, s.values, s.floor);
  return s;
}

double ou_point_w2(double x0, double theta, double sigma, double t) {
  const double s2 = sigma * sigma / (2.0 * theta);
  const double mean = x0 * std::exp(-theta * t);
  const double sd = std::sqrt(s2 * -std::expm1(-2.0 * theta * t));
  const double ds = sd - std::sqrt(s2);
  return std::sqrt(mean * mean + ds * ds);
}

LinearSpec linear_spec(const CoefficientModel& m) {
  if (!m.time_homogeneous) throw InvalidArgument("linear_spec: model '" + m.name + "' is time dependent");
  const int d = m.dim;
  const auto a = m.freeze(0.0, EmpiricalMeasure::dirac(Vector::Zero(d), 1));
  const auto b = m.freeze(0.0, EmpiricalMeasure::dirac(Vector::Constant(d, 3.0), 2));
  LinearSpec s;
  s.A.resize(d, d);
  Vector e = Vector::Zero(d), out(d), other(d);
  for (int j = 0; j < d; ++j) {
    e.setZero();
    e(j) = 1.0;
    a.drift(0.0, e, out);
    s.A.col(j) = out;
  }
  s.S = a.sigma;
  if (!(b.sigma - a.sigma).isZero(0.0)) throw InvalidArgument("linear_spec: noise of '" + m.name + "' depends on the measure");
  rng::Engine eng(0, rng::Stream::checker);
  for (int trial = 0; trial < 4; ++trial) {
    Vector x(d);
    for (int k = 0; k < d; ++k) x(k) = trial == 0 ? 0.0 : 3.0 * eng.normal();
    a.drift(0.0, x, out);
    b.drift(0.0, x, other);
    const Vector lin = s.A * x;
    const double scale = 1.0 + lin.norm() + x.norm();
    if ((out - lin).norm() > 1e-10 * scale || (other - out).norm() > 1e-10 * scale)
      throw InvalidArgument("linear_spec: drift of '" + m.name + "' is not linear and measure-free");
  }
  return s;
}

GaussianLaw linear_moment_oracle(const Matrix& A, const Matrix& S, const Vector& m0, const Matrix& M0, double t) {
  const auto d = A.rows();
  if (A.cols() != d || S.rows() != d || m0.size() != d || M0.rows() != d || M0.cols() != d)
    throw DimensionError("linear_moment_oracle: inconsistent dimensions");
  if (!(t >= 0) || !std::isfinite(t)) throw InvalidArgument("linear_moment_oracle: t must be >= 0");
  GaussianLaw start(m0, M0);  // validates M0
  if (t == 0) return start;
  const Matrix Q = S * S.transpose();
  const double h = t / 2048.0;
  Vector m = start.mean;
  Matrix M = start.cov;
  auto fm = [&](const Vector& v) -> Vector { return A * v; };
  auto fM = [&](const Matrix& P) -> Matrix { return A * P + P * A.transpose() + Q; };
  for (int i = 0; i < 2048; ++i) {
    const Vector k1 = fm(m), k2 = fm(m + 0.5 * h * k1), k3 = fm(m + 0.5 * h * k2), k4 = fm(m + h * k3);
    m += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    const Matrix L1 = fM(M), L2 = fM(M + 0.5 * h * L1), L3 = fM(M + 0.5 * h * L2), L4 = fM(M + h * L3);
    M += h / 6.0 * (L1 + 2 * L2 + 2 * L3 + L4);
  }
  return GaussianLaw(m, 0.5 * (M + M.transpose()));
}

DecaySeries entropy_decay_experiment(const LinearSpec& spec, const GaussianLaw& mu0, const GaussianLaw& invariant,
                                     const std::vector<double>& sample_times) {
  DecaySeries s;
  s.times = sample_times;
  for (double t : sample_times)
    s.values.push_back(measures::gaussian_kl(linear_moment_oracle(spec.A, spec.S, mu0.mean, mu0.cov, t), invariant));
  const auto usable = std::count_if(s.values.begin(), s.values.end(), [](double v) { return v > 0.0; });
  if (usable >= 3) s.fit = decay_fit(s.times, s.values, 0.0);
  return s;
}

TalagrandResult talagrand_check(const GaussianLaw& mu0, const GaussianLaw& invariant, double C) {
  if (!(C > 0)) throw InvalidArgument("talagrand_check: C must be > 0");
  TalagrandResult r;
  const double w = measures::gaussian_w2(mu0, invariant);
  r.lhs = w * w;
  r.rhs = C * measures::gaussian_kl(mu0, invariant);
  if (r.rhs > 0) {
    r.ratio = r.lhs / r.rhs;
  } else if (r.lhs == 0) {
    r.equality = true;
    r.ratio = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.ratio = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::vector<TestFunction> lsi_test_bank() {
  std::vector<TestFunction> bank;
  bank.push_back({"2+sin(x1)", [](const Vector& x) { return 2.0 + std::sin(x(0)); },
                  [](const Vector& x) {
                    Vector g = Vector::Zero(x.size());
                    g(0) = std::cos(x(0));
                    return g;
                  }});
  bank.push_back({"1+exp(-|x|^2)", [](const Vector& x) { return 1.0 + std::exp(-x.squaredNorm()); },
                  [](const Vector& x) -> Vector { return -2.0 * std::exp(-x.squaredNorm()) * x; }});
  bank.push_back({"2+tanh(x1)", [](const Vector& x) { return 2.0 + std::tanh(x(0)); },
                  [](const Vector& x) {
                    Vector g = Vector::Zero(x.size());
                    const double th = std::tanh(x(0));
                    g(0) = 1.0 - th * th;
                    return g;
                  }});
  return bank;
}

LsiGapReport semigroup_lsi_gap(const CoefficientModel& m, const EmpiricalMeasure& frozen, const TestFunction& f,
                               const Vector& x, double t, std::size_t n_mc, const DissipativityConstants& c,
                               const SimConfig& cfg) {
  c.validate();
  if (!(t > 0) || !std::isfinite(t)) throw InvalidArgument("semigroup_lsi_gap: t must be > 0");
  if (n_mc < 2) throw InvalidArgument("semigroup_lsi_gap: n_mc must be >= 2");
  if (!(cfg.dt > 0) || cfg.dt > 0.1) throw InvalidArgument("semigroup_lsi_gap: dt must lie in (0, 0.1]");
  if (x.size() != m.dim) throw DimensionError("semigroup_lsi_gap: start point has the wrong dimension");
  if (m.kind == coeff::Kind::kinetic) throw InvalidArgument("semigroup_lsi_gap needs a non-degenerate model");

  const auto steps = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(t / cfg.dt - 1e-9)));
  const double last = t - static_cast<double>(steps - 1) * cfg.dt;
  const bool tamed = cfg.scheme_for(m) == sim::Scheme::tamed_euler;
  const rng::CounterStream noise(cfg.seed, rng::Stream::noise);
  auto cloud = std::make_shared<const EmpiricalMeasure>(frozen);
  const auto fixed = m.freeze(0.0, cloud);

  const auto n = static_cast<Eigen::Index>(n_mc);
  RowMatrix state(n, m.dim);
  for (Eigen::Index i = 0; i < n; ++i) state.row(i) = x.transpose();
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double h = k + 1 == steps ? last : cfg.dt;
    const double tk = static_cast<double>(k) * cfg.dt;
    const auto fc = m.time_homogeneous ? fixed : m.freeze(tk, cloud);
    const double sh = std::sqrt(h);
#pragma omp parallel
    {
      Vector b(m.dim), z(m.noise_dim), xi(m.dim);
#pragma omp for schedule(static)
      for (Eigen::Index i = 0; i < n; ++i) {
        xi = state.row(i).transpose();
        fc.drift(tk, xi, b);
        if (tamed) b /= 1.0 + h * b.norm();
        noise.normals(k, static_cast<std::uint64_t>(i), std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
        state.row(i) = (xi + h * b + sh * (fc.sigma * z)).transpose();
      }
    }
    if (!state.allFinite()) throw ExplosionError("semigroup_lsi_gap: paths became non-finite", k + 1);
  }

  std::vector<double> fv(n_mc), energy(n_mc);
  bool bad = false;
  Vector bad_point;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xi = state.row(i).transpose();
    const double v = f.f(xi);
    if (!(v > 0) || !std::isfinite(v)) {
      bad = true;
      bad_point = xi;
      break;
    }
    fv[static_cast<std::size_t>(i)] = v;
    energy[static_cast<std::size_t>(i)] = f.grad(xi).squaredNorm() / (4.0 * v);
  }
  if (bad) throw EvaluationError("test function '" + f.name + "' is not positive at a sampled point (first coordinate " +
                                 std::to_string(bad_point(0)) + ")");

  const double mf = mean_sd(fv).mean;
  const double log_mf = std::log(mf);
  std::vector<double> ent(n_mc), infl(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) {
    const double lr = std::log(fv[i]) - log_mf;
    ent[i] = fv[i] * lr;
    infl[i] = fv[i] * (lr - 1.0);  // delta-method influence of E[f log f] - E f log E f
  }
  LsiGapReport r;
  r.t = t;
  r.lhs = mean_sd(ent).mean;
  r.stderr_lhs = mean_sd(infl).sd / std::sqrt(static_cast<double>(n_mc));
  const double factor = 2.0 * c.delta1 / c.K1 * std::expm1(c.K1 * t);
  const auto e = mean_sd(energy);
  r.rhs = factor * e.mean;
  r.stderr_rhs = factor * e.sd / std::sqrt(static_cast<double>(n_mc));
  return r;
}

double harnack_p0(const DissipativityConstants& c) {
  c.validate();
  return 1.0 + 1.0 / std::min(0.5, c.delta2 / (256.0 * c.delta1));
}

double harnack_r_bound(const DissipativityConstants& c, double gap, double t0) {
  const double a = c.K2 * gap * gap / (64.0 * c.delta1 * std::expm1(c.K2 * t0));
  const double s = c.K1 + c.K2;
  const double b = s * s * c.r0 * c.r0 * t0 / (128.0 * c.delta1);
  return std::exp(a + b);
}

CouplingResult harnack_coupling(const CoefficientModel& m, const EmpiricalMeasure& frozen,
                                const DissipativityConstants& c, const Vector& x, const Vector& y, double t0,
                                double p, const SimConfig& cfg, std::size_t n_paths, const HarnackOptions& opt) {
  c.validate();
  if (!(t0 > 0) || !std::isfinite(t0)) throw InvalidArgument("harnack: t0 must be > 0");
  if (!(opt.delta_stop > 0) || !(opt.delta_stop < t0)) throw InvalidArgument("harnack: delta_stop must lie in (0, t0)");
  if (!(cfg.dt > 0) || cfg.dt > 0.1) throw InvalidArgument("harnack: dt must lie in (0, 0.1]");
  if (n_paths < 2) throw InvalidArgument("harnack: n_paths must be >= 2");
  if (x.size() != m.dim || y.size() != m.dim) throw DimensionError("harnack: start points have the wrong dimension");
  if (!m.time_homogeneous) throw InvalidArgument("harnack: model must be time-homogeneous");
  CouplingResult r;
  r.p0 = harnack_p0(c);
  if (p < r.p0 * (1 - 1e-12))
    throw InvalidArgument("harnack: p = " + std::to_string(p) + " is below p0 = " + std::to_string(r.p0));
  r.p_used = p;
  r.n_paths = n_paths;
  r.r_moment_bound = harnack_r_bound(c, (x - y).norm(), t0);

  const auto fc = m.freeze(0.0, frozen);
  const Matrix& sigma = fc.sigma;
  const Matrix ss = sigma * sigma.transpose();
  if (ss.rows() != ss.cols() || sigma.cols() < sigma.rows()) throw DimensionError("harnack: noise is degenerate");
  const Eigen::SelfAdjointEigenSolver<Matrix> es(ss);
  const double tol = 1e-9;
  if (es.eigenvalues().minCoeff() < c.delta2 - tol || es.eigenvalues().maxCoeff() > c.delta1 + tol)
    throw InvalidArgument("harnack: sigma sigma* is not within [delta2, delta1]");
  const Matrix sigma_hat = sigma.transpose() * ss.inverse();
  const bool tamed = cfg.scheme_for(m) == sim::Scheme::tamed_euler;
  const rng::CounterStream noise(cfg.seed, rng::Stream::noise);

  const auto n = static_cast<Eigen::Index>(n_paths);
  const int d = m.dim;
  RowMatrix X(n, d), Y(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = x.transpose();
    Y.row(i) = y.transpose();
  }
  std::vector<double> log_r(n_paths, 0.0);
  std::vector<char> clipped(n_paths, 0);

  auto record = [&](double t) {
    long double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += (X.row(i) - Y.row(i)).norm();
    r.times.push_back(t);
    r.mean_gap.push_back(static_cast<double>(s / n));
  };
  record(0.0);

  const double T = t0 - opt.delta_stop;
  double t = 0.0;
  std::uint64_t k = 0;
  while (T - t > 1e-12 * t0) {
    const double xi = std::expm1(c.K2 * (t0 - t)) / c.K2;
    if (!(xi > 0)) throw ConvergenceError("harnack: xi_t is not positive at t = " + std::to_string(t));
    const double h = std::min({cfg.dt, xi / 10.0, T - t});
    const double sh = std::sqrt(h);
#pragma omp parallel
    {
      Vector bx(d), by(d), z(sigma.cols()), corr(d), eta(sigma.cols());
#pragma omp for schedule(static)
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector xi_x = X.row(i).transpose(), xi_y = Y.row(i).transpose();
        corr = (xi_x - xi_y) / xi;
        const double cn = corr.norm();
        if (cn > opt.clip) {
          corr *= opt.clip / cn;
          clipped[static_cast<std::size_t>(i)] = 1;
        }
        eta = -sigma_hat * corr;
        fc.drift(t, xi_x, bx);
        fc.drift(t, xi_y, by);
        if (tamed) {
          bx /= 1.0 + h * bx.norm();
          by /= 1.0 + h * by.norm();
        }
        noise.normals(k, static_cast<std::uint64_t>(i), std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
        const Vector dw = sh * (sigma * z);
        X.row(i) = (xi_x + h * (bx + sigma * eta) + dw).transpose();
        Y.row(i) = (xi_y + h * by + dw).transpose();
        log_r[static_cast<std::size_t>(i)] += sh * eta.dot(z) + 0.5 * h * eta.squaredNorm();
      }
    }
    t += h;
    ++k;
    if (k % cfg.record_every == 0) record(t);
  }
  if (r.times.back() != t) record(t);

  std::vector<double> weights, gaps;
  for (std::size_t i = 0; i < n_paths; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    gaps.push_back((X.row(row) - Y.row(row)).norm());
    r.clipped_paths += clipped[i];
    const double w = std::exp(log_r[i] / (p - 1.0));
    if (!std::isfinite(w) || !X.row(row).allFinite() || !Y.row(row).allFinite()) {
      ++r.excluded_paths;
      continue;
    }
    weights.push_back(w);
  }
  r.terminal_gap = *std::max_element(gaps.begin(), gaps.end());
  r.terminal_gap_mean = mean_sd(gaps).mean;
  if (!weights.empty()) {
    const auto ms = mean_sd(weights);
    r.r_moment_estimate = ms.mean;
    r.r_moment_stderr = ms.sd / std::sqrt(static_cast<double>(weights.size()));
  } else {
    r.r_moment_estimate = std::numeric_limits<double>::infinity();
  }
  return r;
}

}  // namespace mvlab::ineq
