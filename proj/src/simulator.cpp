#include "mvlab/simulator.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <omp.h>

#include "mvlab/csv.hpp"

namespace mvlab::sim {

std::string to_string(Scheme s) { return s == Scheme::euler ? "euler" : "tamed_euler"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "euler") return Scheme::euler;
  if (s == "tamed_euler") return Scheme::tamed_euler;
  throw InvalidArgument("unknown scheme '" + s + "' (expected euler or tamed_euler)");
}

void SimConfig::validate() const {
  if (!(dt > 0) || !std::isfinite(dt)) throw InvalidArgument("dt must be > 0");
  if (dt > 0.1) throw InvalidArgument("dt must be <= 0.1");
  if (!(t_end > dt) || !std::isfinite(t_end)) throw InvalidArgument("t_end must exceed dt");
  if (t_end / dt > 9.0e18) throw InvalidArgument("t_end/dt does not fit a 64-bit step count");
  if (n_particles < 1) throw InvalidArgument("n_particles must be >= 1");
  if (record_every < 1) throw InvalidArgument("record_every must be >= 1");
}

std::uint64_t SimConfig::n_steps() const {
  // Tolerate representation error in t_end/dt (e.g. 1.0/0.1).
  return static_cast<std::uint64_t>(std::ceil(t_end / dt - 1e-9));
}

Scheme SimConfig::scheme_for(const CoefficientModel& m) const {
  return scheme.value_or(m.superlinear ? Scheme::tamed_euler : Scheme::euler);
}

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// Stepper

Stepper::Stepper(const CoefficientModel& m, Scheme scheme, double dt, std::uint64_t seed)
    : dim_(m.dim),
      noise_dim_(m.noise_dim),
      pos_dim_(m.position_dim()),
      kinetic_(m.kind == coeff::Kind::kinetic),
      scheme_(scheme),
      dt_(dt),
      sqrt_dt_(std::sqrt(dt)),
      stream_(seed, rng::Stream::noise) {}

Stepper::Scratch Stepper::scratch() const { return {Vector(dim_), Vector(noise_dim_), Vector(dim_)}; }

void Stepper::noise(std::uint64_t k, std::uint64_t index, Vector& z) const {
  stream_.normals(k, index, std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
}

void Stepper::step(const FrozenCoefficients& f, double t, std::uint64_t k, std::uint64_t index, ConstVecRef x,
                   VecRef out, Scratch& s) const {
  noise(k, index, s.z);
  step_with_noise(f, t, x, out, s);
}

void Stepper::step_with_noise(const FrozenCoefficients& f, double t, ConstVecRef x, VecRef out,
                              Scratch& s) const {
  f.drift(t, x, s.b);
  if (kinetic_) {
    const int d = pos_dim_;
    auto bv = s.b.tail(d);
    if (scheme_ == Scheme::tamed_euler) bv /= 1.0 + dt_ * bv.norm();
    s.sz.tail(d).noalias() = f.sigma.bottomRows(d) * s.z;
    out.head(d) = x.head(d) + dt_ * x.tail(d);
    out.tail(d) = x.tail(d) + dt_ * bv + sqrt_dt_ * s.sz.tail(d);
    return;
  }
  if (scheme_ == Scheme::tamed_euler) s.b /= 1.0 + dt_ * s.b.norm();
  s.sz.noalias() = f.sigma * s.z;
  out = x + dt_ * s.b + sqrt_dt_ * s.sz;
}

// ---------------------------------------------------------------------------
// Engines

namespace {

using VecMap = Eigen::Map<Vector>;
using ConstVecMap = Eigen::Map<const Vector>;

std::uint64_t mix(std::uint64_t seed, std::uint64_t k) {
  return seed * 0x9E3779B97F4A7C15ull + k + 0x632BE59BD9B4E019ull;
}

void check_inputs(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg) {
  cfg.validate();
  if (init.dim() != m.dim)
    throw DimensionError("initial cloud has dimension " + std::to_string(init.dim()) + ", model '" + m.name +
                         "' expects " + std::to_string(m.dim));
  if (init.size() != cfg.n_particles)
    throw InvalidArgument("initial cloud has " + std::to_string(init.size()) + " particles, config expects " +
                          std::to_string(cfg.n_particles));
}

void advance(const Stepper& st, const FrozenCoefficients& fc, double t, std::uint64_t k, const RowMatrix& cur,
             RowMatrix& nxt) {
  const Eigen::Index n = cur.rows();
  const Eigen::Index dim = cur.cols();
#pragma omp parallel
  {
    auto s = st.scratch();
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      ConstVecMap x(cur.data() + i * dim, dim);
      VecMap out(nxt.data() + i * dim, dim);
      st.step(fc, t, k, static_cast<std::uint64_t>(i), x, out, s);
    }
  }
}

void explosion_check(const RowMatrix& state, std::uint64_t step) {
  if (!state.allFinite())
    throw ExplosionError("particle state became non-finite at step " + std::to_string(step) +
                             "; try scheme tamed_euler or a smaller dt",
                         step);
}

EmpiricalMeasure run(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg,
                     const EmpiricalMeasure* frozen, const Observer& observe) {
  check_inputs(m, init, cfg);
  if (frozen && frozen->dim() != m.dim) throw DimensionError("frozen cloud dimension does not match the model");
  const Stepper st(m, cfg.scheme_for(m), cfg.dt, cfg.seed);
  const std::uint64_t n_steps = cfg.n_steps();

  if (observe) observe(0.0, init.points());

  // Coefficients that never change can be frozen once.
  const bool uses_cloud = !frozen && m.measure_dependent;
  auto fixed_cloud = std::make_shared<const EmpiricalMeasure>(frozen ? *frozen : init);
  const bool fixed = !uses_cloud && m.time_homogeneous;
  FrozenCoefficients fc;
  if (fixed) fc = m.freeze(0.0, fixed_cloud);

  RowMatrix cur = init.points();
  RowMatrix nxt(cur.rows(), cur.cols());
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    if (!fixed) {
      coeff::CloudPtr mu = fixed_cloud;
      if (uses_cloud) {
        auto snap = std::make_shared<const EmpiricalMeasure>(cur);
        if (cfg.interaction_batch > 0 && cfg.interaction_batch < snap->size())
          snap = std::make_shared<const EmpiricalMeasure>(snap->subsample(cfg.interaction_batch, mix(cfg.seed, k)));
        mu = std::move(snap);
      }
      fc = m.freeze(t, std::move(mu));
    }
    advance(st, fc, t, k, cur, nxt);
    explosion_check(nxt, k + 1);
    cur.swap(nxt);
    if (observe && ((k + 1) % cfg.record_every == 0 || k + 1 == n_steps))
      observe(static_cast<double>(k + 1) * cfg.dt, cur);
  }
  return EmpiricalMeasure(std::move(cur));
}

TrajectoryEnsemble collect(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg,
                           const EmpiricalMeasure* frozen) {
  TrajectoryEnsemble ens;
  run(m, init, cfg, frozen, [&ens](double t, const RowMatrix& x) {
    ens.times.push_back(t);
    ens.clouds.emplace_back(x);
  });
  return ens;
}

}  // namespace

TrajectoryEnsemble simulate_mean_field(const CoefficientModel& m, const EmpiricalMeasure& init,
                                       const SimConfig& cfg) {
  return collect(m, init, cfg, nullptr);
}

TrajectoryEnsemble simulate_frozen(const CoefficientModel& m, const EmpiricalMeasure& frozen,
                                   const EmpiricalMeasure& init, const SimConfig& cfg) {
  return collect(m, init, cfg, &frozen);
}

EmpiricalMeasure simulate_mean_field(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg,
                                     const Observer& observe) {
  return run(m, init, cfg, nullptr, observe);
}

EmpiricalMeasure simulate_frozen(const CoefficientModel& m, const EmpiricalMeasure& frozen,
                                 const EmpiricalMeasure& init, const SimConfig& cfg, const Observer& observe) {
  return run(m, init, cfg, &frozen, observe);
}

SyncPairResult synchronous_pair(const CoefficientModel& m, const EmpiricalMeasure& frozen, const Vector& x,
                                const Vector& y, const SimConfig& cfg) {
  cfg.validate();
  if (x.size() != m.dim || y.size() != m.dim) throw DimensionError("synchronous_pair: start points have wrong dimension");
  if (frozen.dim() != m.dim) throw DimensionError("frozen cloud dimension does not match the model");
  const Stepper st(m, cfg.scheme_for(m), cfg.dt, cfg.seed);
  const std::uint64_t n_steps = cfg.n_steps();
  const auto n_paths = static_cast<Eigen::Index>(cfg.n_particles);
  auto cloud = std::make_shared<const EmpiricalMeasure>(frozen);

  SyncPairResult res;
  res.times.push_back(0.0);
  for (std::uint64_t k = 1; k <= n_steps; ++k)
    if (k % cfg.record_every == 0 || k == n_steps) res.times.push_back(static_cast<double>(k) * cfg.dt);
  res.gaps.resize(n_paths, static_cast<Eigen::Index>(res.times.size()));

  const FrozenCoefficients fixed = m.freeze(0.0, cloud);
  bool exploded = false;
  std::uint64_t explode_step = 0;
#pragma omp parallel
  {
    auto s = st.scratch();
    Vector X(m.dim), Y(m.dim), Xn(m.dim), Yn(m.dim);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n_paths; ++i) {
      X = x;
      Y = y;
      Eigen::Index col = 0;
      res.gaps(i, col++) = (X - Y).norm();
      for (std::uint64_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        const FrozenCoefficients fc = m.time_homogeneous ? fixed : m.freeze(t, cloud);
        st.noise(k, static_cast<std::uint64_t>(i), s.z);
        st.step_with_noise(fc, t, X, Xn, s);
        st.step_with_noise(fc, t, Y, Yn, s);
        X.swap(Xn);
        Y.swap(Yn);
        if (!X.allFinite() || !Y.allFinite()) {
#pragma omp critical
          {
            if (!exploded || k + 1 < explode_step) explode_step = k + 1;
            exploded = true;
          }
          break;
        }
        if ((k + 1) % cfg.record_every == 0 || k + 1 == n_steps) res.gaps(i, col++) = (X - Y).norm();
      }
    }
  }
  if (exploded)
    throw ExplosionError("synchronous pair became non-finite at step " + std::to_string(explode_step), explode_step);
  return res;
}

// ---------------------------------------------------------------------------
// Yosida approximation

Vector yosida_resolvent(const DriftFn& tilde_b, double t, const Vector& x, double n) {
  const Eigen::Index d = x.size();
  Vector y = x, b(d), F(d), trial(d), Ft(d), bp(d), bm(d);
  auto residual = [&](const Vector& z, Vector& out) {
    tilde_b(t, z, b);
    out = z - b / n - x;
    return out.norm();
  };
  double r = residual(y, F);
  Matrix J(d, d);
  int polish = 0;
  for (int it = 0; it < 200; ++it) {
    if (!std::isfinite(r)) break;
    if (r <= 1e-10) {
      // A few extra Newton steps take the residual to rounding level.
      if (r == 0.0 || polish >= 4) return y;
      ++polish;
    }
    for (Eigen::Index k = 0; k < d; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(y(k)));
      Vector yp = y, ym = y;
      yp(k) += h;
      ym(k) -= h;
      tilde_b(t, yp, bp);
      tilde_b(t, ym, bm);
      J.col(k) = -(bp - bm) / (2.0 * h * n);
      J(k, k) += 1.0;
    }
    const Vector step = J.partialPivLu().solve(-F);
    double lambda = 1.0, rt = r;
    bool accepted = false;
    while (lambda > 1e-10) {
      trial = y + lambda * step;
      rt = residual(trial, Ft);
      if (std::isfinite(rt) && rt < r) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (r <= 1e-10) return y;
      // Damped fixed-point step as a fallback.
      tilde_b(t, y, b);
      trial = 0.5 * y + 0.5 * (x + b / n);
      rt = residual(trial, Ft);
      if (!std::isfinite(rt)) break;
    }
    y = trial;
    F = Ft;
    r = rt;
  }
  if (std::isfinite(r) && r <= 1e-10) return y;
  std::string xs;
  for (Eigen::Index k = 0; k < d; ++k) xs += (k ? "," : "") + csv::format_double(x(k));
  throw ConvergenceError("yosida resolvent did not converge at x=(" + xs + "), n=" + csv::format_double(n) +
                         " (is the drift one-sided Lipschitz with the given K?)");
}

DriftFn yosida_drift(DriftFn base, int dim, double n, std::function<double(double)> K) {
  if (!(n >= 1) || !std::isfinite(n)) throw InvalidArgument("yosida: n must be >= 1");
  if (dim < 1) throw InvalidArgument("yosida: dim must be >= 1");
  if (!K) K = [](double) { return 0.0; };
  return [base = std::move(base), dim, n, K = std::move(K)](double t, ConstVecRef x, VecRef out) {
    const double k = K(t);
    DriftFn tilde = [&base, k](double s, ConstVecRef z, VecRef o) {
      base(s, z, o);
      o -= 0.5 * k * z;
    };
    const Vector xv = x;
    const Vector y = yosida_resolvent(tilde, t, xv, n);
    out = n * (y - xv) + 0.5 * k * xv;
    (void)dim;
  };
}

// ---------------------------------------------------------------------------
// Mollifier

namespace {

using GL32 = boost::math::quadrature::gauss<double, 32>;

// Nodes and weights of a composite 32-point Gauss-Legendre rule on [a, b].
void gauss_legendre(double a, double b, int panels, std::vector<double>& nodes, std::vector<double>& weights) {
  const auto& abs = GL32::abscissa();
  const auto& w = GL32::weights();
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h, half = 0.5 * h;
    // Ascending order within a panel keeps the rule symmetric.
    for (std::size_t i = abs.size(); i-- > 0;) {
      nodes.push_back(mid - half * abs[i]);
      weights.push_back(half * w[i]);
    }
    for (std::size_t i = 0; i < abs.size(); ++i) {
      if (abs[i] == 0.0) continue;
      nodes.push_back(mid + half * abs[i]);
      weights.push_back(half * w[i]);
    }
  }
}

double bump_profile(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

// ∫_{R^d} exp(-1/(1-|u|²)) du over the unit ball, through the radial integral.
double bump_mass(int dim) {
  std::vector<double> r, w;
  gauss_legendre(0.0, 1.0, 64, r, w);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < r.size(); ++i) acc += w[i] * std::pow(r[i], dim - 1) * bump_profile(r[i] * r[i]);
  const double sphere = 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / boost::math::tgamma(0.5 * dim);
  return sphere * static_cast<double>(acc);
}

}  // namespace

MollifierRule mollifier_rule(Mollifier rho, int dim, const Quadrature& q) {
  if (dim < 1) throw InvalidArgument("mollifier: dim must be >= 1");
  if (q.panels < 1) throw InvalidArgument("mollifier: panels must be >= 1");
  const double norm = rho == Mollifier::uniform ? std::pow(0.5, dim) : 1.0 / bump_mass(dim);
  auto density = [&](const Vector& u) {
    if (rho == Mollifier::uniform) return u.cwiseAbs().maxCoeff() <= 1.0 ? norm : 0.0;
    return norm * bump_profile(u.squaredNorm());
  };

  MollifierRule rule;
  std::vector<Vector> pts;
  std::vector<double> wts;
  if (dim <= 2) {
    std::vector<double> n1, w1;
    gauss_legendre(-1.0, 1.0, q.panels, n1, w1);
    if (dim == 1) {
      for (std::size_t i = 0; i < n1.size(); ++i) {
        pts.push_back(Vector::Constant(1, n1[i]));
        wts.push_back(w1[i]);
      }
    } else {
      for (std::size_t i = 0; i < n1.size(); ++i)
        for (std::size_t j = 0; j < n1.size(); ++j) {
          pts.push_back(Eigen::Vector2d(n1[i], n1[j]));
          wts.push_back(w1[i] * w1[j]);
        }
    }
  } else {
    if (q.mc_points < 1) throw InvalidArgument("mollifier: mc_points must be >= 1");
    rng::Engine eng(q.seed, rng::Stream::quadrature);
    const double vol = std::pow(2.0, dim) / static_cast<double>(q.mc_points);
    for (std::size_t i = 0; i < q.mc_points; ++i) {
      Vector u(dim);
      for (int k = 0; k < dim; ++k) u(k) = eng.uniform(-1.0, 1.0);
      pts.push_back(u);
      wts.push_back(vol);
    }
  }

  long double mass = 0.0L;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    wts[i] *= density(pts[i]);
    mass += wts[i];
    if (wts[i] != 0.0) keep.push_back(i);
  }
  rule.mass = static_cast<double>(mass);
  if (dim <= 2 && std::abs(rule.mass - 1.0) > 1e-6)
    throw InvalidArgument("mollifier mass by quadrature is " + csv::format_double(rule.mass) +
                          ", deviates from 1 beyond 1e-6; increase the panel count");
  rule.nodes.resize(static_cast<Eigen::Index>(keep.size()), dim);
  long double moment = 0.0L;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    rule.nodes.row(static_cast<Eigen::Index>(j)) = pts[keep[j]].transpose();
    const double w = wts[keep[j]] / rule.mass;
    rule.weights.push_back(w);
    moment += w * pts[keep[j]].norm();
  }
  rule.first_abs_moment = static_cast<double>(moment);
  return rule;
}

DriftFn mollify_drift(DriftFn base, int dim, double m, Mollifier rho, const Quadrature& q) {
  if (!(m >= 1) || !std::isfinite(m)) throw InvalidArgument("mollifier: m must be >= 1");
  auto rule = std::make_shared<const MollifierRule>(mollifier_rule(rho, dim, q));
  return [base = std::move(base), rule, m, dim](double t, ConstVecRef x, VecRef out) {
    Vector z(dim), b(dim);
    Vector acc = Vector::Zero(dim);
    for (Eigen::Index j = 0; j < rule->nodes.rows(); ++j) {
      z = x - rule->nodes.row(j).transpose() / m;
      base(t, z, b);
      acc += rule->weights[static_cast<std::size_t>(j)] * b;
    }
    out = acc;
  };
}

std::string Regularization::label() const {
  switch (kind) {
    case Kind::none:
      return "none";
    case Kind::yosida:
      return "yosida(n=" + csv::format_double(level) + ")";
    case Kind::mollified:
      return std::string(rho == Mollifier::uniform ? "mollified_uniform" : "mollified_bump") +
             "(m=" + csv::format_double(level) + ")";
  }
  return "unknown";
}

CoefficientModel regularize(const CoefficientModel& m, const Regularization& r) {
  if (r.kind == Regularization::Kind::none) return m;
  CoefficientModel out = m;
  out.name = m.name + "+" + r.label();
  const int dim = m.dim;
  if (r.kind == Regularization::Kind::mollified) (void)mollifier_rule(r.rho, dim, r.quad);  // validate early
  out.freezer = [base = m.freezer, r, dim](double t, coeff::CloudPtr mu) {
    FrozenCoefficients f = base(t, std::move(mu));
    if (r.kind == Regularization::Kind::yosida) {
      const double K = r.K;
      f.drift = yosida_drift(std::move(f.drift), dim, r.level, [K](double) { return K; });
    } else {
      f.drift = mollify_drift(std::move(f.drift), dim, r.level, r.rho, r.quad);
    }
    return f;
  };
  return out;
}

std::vector<RegularizationRow> regularization_convergence(const CoefficientModel& m,
                                                          const std::vector<Regularization>& levels,
                                                          const EmpiricalMeasure& init, const SimConfig& cfg,
                                                          const std::optional<EmpiricalMeasure>& frozen) {
  SimConfig c = cfg;
  c.scheme = cfg.scheme_for(m);  // same scheme for every level
  const EmpiricalMeasure& fz = frozen ? *frozen : init;
  const RowMatrix ref = simulate_frozen(m, fz, init, c, Observer{}).points();
  std::vector<RegularizationRow> rows;
  for (const auto& lv : levels) {
    const RowMatrix got = simulate_frozen(regularize(m, lv), fz, init, c, Observer{}).points();
    long double acc = 0.0L;
    for (Eigen::Index i = 0; i < ref.rows(); ++i) acc += (got.row(i) - ref.row(i)).squaredNorm();
    RegularizationRow row;
    row.label = lv.label();
    row.level = lv.kind == Regularization::Kind::none ? std::numeric_limits<double>::infinity() : lv.level;
    row.ms_gap = static_cast<double>(acc / ref.rows());
    row.rms_gap = std::sqrt(row.ms_gap);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mvlab::sim
