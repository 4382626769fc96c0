#include "mvlab/coefficients.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mvlab/csv.hpp"
#include "mvlab/rng.hpp"

namespace mvlab::coeff {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

std::string vec_str(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += csv::format_double(v(i));
  }
  return s + ")";
}

void require_dim(const EmpiricalMeasure& mu, int d, const std::string& who) {
  if (mu.dim() != d)
    throw DimensionError(who + ": cloud dimension " + std::to_string(mu.dim()) + " does not match model dimension " +
                         std::to_string(d));
}

}  // namespace

// ---------------------------------------------------------------------------
// GradientKinetic

double GradientKinetic::V(const Vector& x) const {
  double v = 0.5 * k * (x.array() - c).square().sum();
  if (a != 0.0) v += a * x.array().cos().sum();
  return v;
}

Vector GradientKinetic::grad_V(const Vector& x) const {
  Vector g = k * (x.array() - c).matrix();
  if (a != 0.0) g.array() -= a * x.array().sin();
  return g;
}

double GradientKinetic::W(const Vector& x, const Vector& z) const {
  const auto zx = z.head(x.size());
  return eps * x.dot(zx) + 0.5 * kappa * (x - zx).squaredNorm();
}

// ---------------------------------------------------------------------------
// CoefficientModel

FrozenCoefficients CoefficientModel::freeze(double t, CloudPtr mu) const {
  if (!freezer) throw InvalidArgument("model '" + name + "' has no coefficients");
  if (!mu) throw InvalidArgument("model '" + name + "': null measure");
  FrozenCoefficients f = freezer(t, std::move(mu));
  if (f.sigma.rows() != dim || f.sigma.cols() != noise_dim)
    throw DimensionError("model '" + name + "': diffusion matrix is " + std::to_string(f.sigma.rows()) + "x" +
                         std::to_string(f.sigma.cols()) + ", expected " + std::to_string(dim) + "x" +
                         std::to_string(noise_dim));
  if (!f.sigma.allFinite()) throw EvaluationError("model '" + name + "': non-finite diffusion matrix");
  return f;
}

FrozenCoefficients CoefficientModel::freeze(double t, const EmpiricalMeasure& mu) const {
  return freeze(t, std::make_shared<const EmpiricalMeasure>(mu));
}

Vector CoefficientModel::drift(double t, const Vector& x, const EmpiricalMeasure& mu) const {
  if (x.size() != dim) throw DimensionError("model '" + name + "': state has wrong dimension");
  const FrozenCoefficients f = freeze(t, mu);
  Vector out(dim);
  f.drift(t, x, out);
  return out;
}

Matrix CoefficientModel::diffusion(double t, const EmpiricalMeasure& mu) const { return freeze(t, mu).sigma; }

CoefficientModel make_model(std::string name, int dim, int noise_dim, MeasureDrift drift,
                            MeasureDiffusion diffusion, bool measure_dependent, bool superlinear) {
  if (dim < 1 || noise_dim < 1) throw InvalidArgument("make_model: dimensions must be >= 1");
  CoefficientModel m;
  m.name = std::move(name);
  m.dim = dim;
  m.noise_dim = noise_dim;
  m.measure_dependent = measure_dependent;
  m.superlinear = superlinear;
  m.pairwise = measure_dependent;
  m.freezer = [drift = std::move(drift), diffusion = std::move(diffusion)](double t, CloudPtr mu) {
    FrozenCoefficients f;
    f.sigma = diffusion(t, *mu);
    f.drift = [drift, mu](double s, ConstVecRef x, VecRef out) { drift(s, x, *mu, out); };
    return f;
  };
  return m;
}

CoefficientModel make_kinetic_model(std::string name, int d, int noise_dim, MeasureDrift velocity_drift,
                                    MeasureDiffusion velocity_sigma, bool measure_dependent) {
  if (d < 1 || noise_dim < 1) throw InvalidArgument("make_kinetic_model: dimensions must be >= 1");
  CoefficientModel m;
  m.name = std::move(name);
  m.dim = 2 * d;
  m.noise_dim = noise_dim;
  m.kind = Kind::kinetic;
  m.measure_dependent = measure_dependent;
  m.pairwise = measure_dependent;
  m.freezer = [d, noise_dim, velocity_drift = std::move(velocity_drift),
               velocity_sigma = std::move(velocity_sigma)](double t, CloudPtr mu) {
    FrozenCoefficients f;
    f.sigma = Matrix::Zero(2 * d, noise_dim);
    f.sigma.bottomRows(d) = velocity_sigma(t, *mu);
    f.drift = [d, velocity_drift, mu](double s, ConstVecRef z, VecRef out) {
      out.head(d) = z.tail(d);
      velocity_drift(s, z, *mu, out.tail(d));
    };
    return f;
  };
  return m;
}

// ---------------------------------------------------------------------------
// Builtins

CoefficientModel ou(double theta, double sigma, int dim) {
  if (dim < 1) throw InvalidArgument("ou: dim must be >= 1");
  if (!std::isfinite(theta) || !std::isfinite(sigma)) throw InvalidArgument("ou: parameters must be finite");
  CoefficientModel m;
  m.name = "ou";
  m.dim = m.noise_dim = dim;
  m.freezer = [theta, sigma, dim](double, CloudPtr) {
    FrozenCoefficients f;
    f.sigma = sigma * Matrix::Identity(dim, dim);
    f.drift = [theta](double, ConstVecRef x, VecRef out) { out = -theta * x; };
    return f;
  };
  return m;
}

CoefficientModel mean_field_linear(double a, double kappa, double sigma, int dim) {
  if (dim < 1) throw InvalidArgument("mean_field_linear: dim must be >= 1");
  CoefficientModel m;
  m.name = "mean_field_linear";
  m.dim = m.noise_dim = dim;
  m.measure_dependent = kappa != 0.0;
  m.freezer = [a, kappa, sigma, dim](double, CloudPtr mu) {
    require_dim(*mu, dim, "mean_field_linear");
    const Vector mean = mu->mean();
    FrozenCoefficients f;
    f.sigma = sigma * Matrix::Identity(dim, dim);
    f.drift = [a, kappa, mean](double, ConstVecRef x, VecRef out) { out = -a * x - kappa * (x - mean); };
    return f;
  };
  return m;
}

CoefficientModel exabc(double w, double u, int dim) {
  if (dim < 1) throw InvalidArgument("exabc: dim must be >= 1");
  CoefficientModel m;
  m.name = "exabc";
  m.dim = m.noise_dim = dim;
  m.measure_dependent = (w != 0.0 || u != 0.0);
  m.pairwise = (w != 0.0);
  m.superlinear = true;
  m.freezer = [w, u, dim](double, CloudPtr mu) {
    require_dim(*mu, dim, "exabc");
    FrozenCoefficients f;
    Vector diag = Vector::Ones(dim);
    if (u != 0.0) {
      const auto& p = mu->points();
      for (int k = 0; k < dim; ++k) {
        long double acc = 0.0L;
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          const double s = 1.0 / std::cosh(p(i, k));
          acc += std::pow(s, 4);
        }
        diag(k) = std::sqrt(1.0 + u * u * static_cast<double>(acc / p.rows()));
      }
    }
    f.sigma = diag.asDiagonal();
    f.drift = [w, mu](double, ConstVecRef x, VecRef out) {
      out = (2.0 - 4.0 * x.squaredNorm()) * x;
      if (w == 0.0) return;
      const auto& p = mu->points();
      const Eigen::Index n = p.rows();
      Vector acc = Vector::Zero(x.size());
      for (Eigen::Index j = 0; j < n; ++j) {
        const Vector z = x - p.row(j).transpose();
        acc.noalias() += z / std::sqrt(1.0 + z.squaredNorm());
      }
      out -= (w / static_cast<double>(n)) * acc;
    };
    return f;
  };
  return m;
}

CoefficientModel kinetic_gradient(const GradientKinetic& spec) {
  if (spec.d < 1) throw InvalidArgument("kinetic_gradient: dim must be >= 1");
  if (!(spec.sigma > 0.0)) throw InvalidArgument("kinetic_gradient: sigma must be positive");
  const int d = spec.d;
  CoefficientModel m;
  m.name = "kinetic_gradient";
  m.dim = 2 * d;
  m.noise_dim = d;
  m.kind = Kind::kinetic;
  m.measure_dependent = (spec.eps != 0.0 || spec.kappa != 0.0);
  m.gradient_kinetic = spec;
  m.freezer = [spec, d, dep = m.measure_dependent](double, CloudPtr mu) {
    require_dim(*mu, 2 * d, "kinetic_gradient");
    Vector mx = Vector::Zero(d);
    if (dep) mx = mu->mean().head(d);
    FrozenCoefficients f;
    f.sigma = Matrix::Zero(2 * d, d);
    f.sigma.bottomRows(d) = spec.sigma * Matrix::Identity(d, d);
    f.drift = [spec, d, mx](double, ConstVecRef z, VecRef out) {
      const Vector x = z.head(d);
      out.head(d) = z.tail(d);
      out.tail(d) = -spec.friction * z.tail(d) - spec.grad_V(x) - spec.eps * mx - spec.kappa * (x - mx);
    };
    return f;
  };
  return m;
}

const std::vector<BuiltinInfo>& builtin_catalog() {
  static const std::vector<BuiltinInfo> catalog = {
      {"ou",
       "Ornstein-Uhlenbeck: b = -theta x, sigma = sigma I",
       {{"theta", 1.0, "mean reversion rate"}, {"sigma", kSqrt2, "noise scale"}, {"dim", 1.0, "state dimension"}}},
      {"mean_field_linear",
       "linear mean field: b = -a x - kappa (x - mean(mu)), sigma = sigma I",
       {{"a", 1.0, "confinement rate"},
        {"kappa", 0.2, "attraction to the cloud mean"},
        {"sigma", 1.0, "noise scale"},
        {"dim", 1.0, "state dimension"}}},
      {"exabc",
       "double well with quartic confinement: b = -4|x|^2 x + 2x + mean(-w (x-y)/sqrt(1+|x-y|^2)), "
       "sigma = sqrt(I + mean(u^2 diag sech^4))",
       {{"w", 0.0, "interaction strength (Lipschitz constant of grad W)"},
        {"u", 0.0, "diffusion modulation (bound of grad U)"},
        {"dim", 1.0, "state dimension"}}},
      {"kinetic_gradient",
       "kinetic Langevin: dX = Y dt, dY = (-friction Y - grad V(X) - mean grad_x W(X,z)) dt + sigma dW, "
       "V = k|x-c|^2/2 + a sum cos x_i, W = eps x.z_x + kappa/2 |x-z_x|^2",
       {{"k", 1.0, "quadratic confinement"},
        {"c", 0.0, "confinement centre"},
        {"a", 0.0, "cosine perturbation amplitude"},
        {"eps", 0.0, "bilinear interaction"},
        {"kappa", 0.0, "quadratic attraction to the cloud"},
        {"friction", 1.0, "velocity damping"},
        {"sigma", kSqrt2, "velocity noise scale"},
        {"dim", 1.0, "position dimension d (state is 2d)"}}},
  };
  return catalog;
}

CoefficientModel builtin_model(const std::string& name, const Params& params) {
  const BuiltinInfo* info = nullptr;
  for (const auto& b : builtin_catalog())
    if (b.name == name) info = &b;
  if (!info) throw InvalidArgument("unknown model '" + name + "'");
  Params p;
  for (const auto& pi : info->params) p[pi.name] = pi.default_value;
  for (const auto& [k, v] : params) {
    if (!p.count(k)) throw InvalidArgument("model '" + name + "' has no parameter '" + k + "'");
    if (!std::isfinite(v)) throw InvalidArgument("model parameter '" + k + "' must be finite");
    p[k] = v;
  }
  const double dd = p["dim"];
  if (dd < 1 || dd != std::floor(dd) || dd > 64) throw InvalidArgument("model parameter 'dim' must be an integer in [1,64]");
  const int dim = static_cast<int>(dd);
  if (name == "ou") return ou(p["theta"], p["sigma"], dim);
  if (name == "mean_field_linear") return mean_field_linear(p["a"], p["kappa"], p["sigma"], dim);
  if (name == "exabc") return exabc(p["w"], p["u"], dim);
  GradientKinetic g;
  g.d = dim;
  g.k = p["k"];
  g.c = p["c"];
  g.a = p["a"];
  g.eps = p["eps"];
  g.kappa = p["kappa"];
  g.friction = p["friction"];
  g.sigma = p["sigma"];
  return kinetic_gradient(g);
}

// ---------------------------------------------------------------------------
// Constants

void DissipativityConstants::validate() const {
  for (double v : {K1, K2, KI, r0, delta1, delta2})
    if (!std::isfinite(v)) throw InvalidArgument("dissipativity constants must be finite");
  if (!(K1 > 0)) throw InvalidArgument("K1 must be > 0");
  if (!(K2 > 0)) throw InvalidArgument("K2 must be > 0");
  if (KI < 0) throw InvalidArgument("KI must be >= 0");
  if (r0 < 0) throw InvalidArgument("r0 must be >= 0");
  if (!(delta2 > 0)) throw InvalidArgument("delta2 must be > 0");
  if (delta1 < delta2) throw InvalidArgument("delta1 must be >= delta2");
}

void KineticConstants::validate() const {
  for (double v : {r, r0, theta, R, KM})
    if (!std::isfinite(v)) throw InvalidArgument("kinetic constants must be finite");
  if (!(std::abs(r0) < 1)) throw InvalidArgument("kinetic r0 must lie in (-1,1)");
  if (r < 0 || theta < 0 || R < 0 || KM < 0) throw InvalidArgument("kinetic r, theta, R, KM must be >= 0");
  if (r == 0 && r0 != 0) throw InvalidArgument("kinetic r = 0 requires r0 = 0");
}

// ---------------------------------------------------------------------------
// Single-sample violations

namespace {

Vector eval_drift(const FrozenCoefficients& f, double t, const Vector& x) {
  Vector out(x.size());
  f.drift(t, x, out);
  return out;
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw EvaluationError(std::string("non-finite ") + what);
}

}  // namespace

double violation_monotone(const CoefficientModel& m, const DissipativityConstants& c, double t,
                          const Vector& x, const Vector& y, const EmpiricalMeasure& g,
                          const EmpiricalMeasure& gt) {
  const auto fg = m.freeze(t, g), fgt = m.freeze(t, gt);
  const Vector bx = eval_drift(fg, t, x), by = eval_drift(fgt, t, y);
  require_finite(bx, "drift");
  require_finite(by, "drift");
  const Vector dx = x - y;
  const double lhs = 2.0 * (bx - by).dot(dx) + (fg.sigma - fgt.sigma).squaredNorm();
  const double w = c.KI > 0 ? measures::w2_exact(g, gt) : 0.0;
  return lhs - c.K1 * dx.squaredNorm() - c.KI * w * w;
}

double violation_partial_dissipative(const CoefficientModel& m, const DissipativityConstants& c,
                                     const Vector& x, const Vector& y, const EmpiricalMeasure& g,
                                     const EmpiricalMeasure& gt) {
  const auto fg = m.freeze(0.0, g), fgt = m.freeze(0.0, gt);
  const Vector bx = eval_drift(fg, 0.0, x), by = eval_drift(fgt, 0.0, y);
  require_finite(bx, "drift");
  require_finite(by, "drift");
  const Vector dx = x - y;
  const double s2 = dx.squaredNorm();
  const double lhs = 2.0 * (bx - by).dot(dx) + (fg.sigma - fgt.sigma).squaredNorm();
  const double w = c.KI > 0 ? measures::w2_exact(g, gt) : 0.0;
  const double rhs = (std::sqrt(s2) <= c.r0 ? c.K1 * s2 : -c.K2 * s2) + c.KI * w * w;
  return lhs - rhs;
}

double violation_ellipticity(const CoefficientModel& m, const DissipativityConstants& c,
                             const EmpiricalMeasure& g) {
  const Matrix s = m.diffusion(0.0, g);
  const Matrix a = s * s.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return std::max(c.delta2 - es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff() - c.delta1);
}

double violation_kinetic_dissipative(const CoefficientModel& m, const KineticConstants& kc,
                                     const Vector& z, const Vector& zbar, const EmpiricalMeasure& mu) {
  if (m.kind != Kind::kinetic) throw InvalidArgument("kinetic condition needs a kinetic model");
  const int d = m.position_dim();
  const Vector dx = z.head(d) - zbar.head(d), dy = z.tail(d) - zbar.tail(d);
  const double q = dx.squaredNorm() + dy.squaredNorm();
  if (q < kc.R * kc.R) return -std::numeric_limits<double>::infinity();
  const auto f = m.freeze(0.0, mu);
  const Vector bz = eval_drift(f, 0.0, z).tail(d), bzb = eval_drift(f, 0.0, zbar).tail(d);
  require_finite(bz, "drift");
  require_finite(bzb, "drift");
  const double lhs = (kc.r * kc.r * dx + kc.r * kc.r0 * dy).dot(dy) + (dy + kc.r * kc.r0 * dx).dot(bz - bzb);
  return lhs + kc.theta * q;
}

double violation_kinetic_lipschitz(const CoefficientModel& m, const KineticConstants& kc, double KI,
                                   const Vector& z, const Vector& zbar, const EmpiricalMeasure& g,
                                   const EmpiricalMeasure& gt) {
  if (m.kind != Kind::kinetic) throw InvalidArgument("kinetic condition needs a kinetic model");
  const int d = m.position_dim();
  const auto fg = m.freeze(0.0, g), fgt = m.freeze(0.0, gt);
  const Vector bz = eval_drift(fg, 0.0, z).tail(d), bzb = eval_drift(fgt, 0.0, zbar).tail(d);
  require_finite(bz, "drift");
  require_finite(bzb, "drift");
  const double lhs = (bz - bzb).norm() + (fg.sigma - fgt.sigma).norm();
  const double w = KI > 0 ? measures::w2_exact(g, gt) : 0.0;
  return lhs - kc.KM * (z - zbar).norm() - KI * w;
}

// ---------------------------------------------------------------------------
// Samplers

namespace {

struct Sampler {
  rng::Engine eng;
  int dim;
  double radius;
  std::size_t max_cloud;

  Vector in_ball(double rad) {
    Vector v(dim);
    double n = 0;
    do {
      for (int k = 0; k < dim; ++k) v(k) = eng.normal();
      n = v.norm();
    } while (n == 0.0);
    return v * (rad * std::pow(eng.uniform(), 1.0 / dim) / n);
  }

  // Even samples: independent points in the ball. Odd samples: y near x at a
  // log-uniform distance, so small separations and thresholds are explored.
  void pair(std::size_t i, Vector& x, Vector& y) {
    x = in_ball(radius);
    if (i % 2 == 0) {
      y = in_ball(radius);
      return;
    }
    Vector u = in_ball(1.0);
    const double un = u.norm();
    if (un == 0.0) u = Vector::Unit(dim, 0);
    else u /= un;
    const double lo = std::log(1e-4 * radius), hi = std::log(2.0 * radius);
    const double s = std::exp(eng.uniform(lo, hi));
    y = x + s * u;
    const double yn = y.norm();
    if (yn > radius) y *= radius / yn;
  }

  EmpiricalMeasure cloud(std::size_t n) {
    const Vector centre = in_ball(radius / 2);
    const double scale = eng.uniform(0.0, radius / 4);
    RowMatrix p(static_cast<Eigen::Index>(n), dim);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (int k = 0; k < dim; ++k) p(i, k) = centre(k) + scale * eng.normal();
    return EmpiricalMeasure(std::move(p));
  }

  void clouds(EmpiricalMeasure& g, EmpiricalMeasure& gt) {
    const std::size_t n = 1 + eng.below(max_cloud);
    g = cloud(n);
    gt = eng.below(2) == 0 ? g : cloud(n);
  }
};

void validate_options(const CheckOptions& opt) {
  if (opt.n_pairs < 1) throw InvalidArgument("check: n_pairs must be >= 1");
  if (!(opt.radius > 0) || !std::isfinite(opt.radius)) throw InvalidArgument("check: radius must be > 0");
  if (opt.max_cloud < 1 || opt.max_cloud > 32) throw InvalidArgument("check: cloud size must be in [1,32]");
}

void record(ConditionReport& r, double v, const char* cond, const Vector& x, const Vector& y,
            const EmpiricalMeasure& g, const EmpiricalMeasure& gt) {
  if (v > r.worst_violation) {
    r.worst_violation = v;
    r.witness = Witness{cond, x, y, g.points(), gt.points()};
  }
}

template <class F>
void guarded(std::size_t i, const Vector& x, const Vector& y, F&& f) {
  try {
    f();
  } catch (const EvaluationError& e) {
    throw EvaluationError(std::string(e.what()) + " at sample " + std::to_string(i) + " x=" + vec_str(x) +
                          " y=" + vec_str(y));
  }
}

void finish(ConditionReport& r, const CheckOptions& opt) {
  r.n_samples = opt.n_pairs;
  r.tolerance = opt.tolerance;
  r.satisfied = r.worst_violation <= opt.tolerance;
}

}  // namespace

ConditionReport check_monotonicity_A(const CoefficientModel& m, const DissipativityConstants& c,
                                     const CheckOptions& opt) {
  validate_options(opt);
  if (!std::isfinite(c.K1) || !std::isfinite(c.KI) || c.KI < 0) throw InvalidArgument("invalid K1/KI");
  Sampler s{rng::Engine(opt.seed, rng::Stream::checker), m.dim, opt.radius, opt.max_cloud};
  ConditionReport r;
  Vector x, y;
  EmpiricalMeasure g, gt;
  for (std::size_t i = 0; i < opt.n_pairs; ++i) {
    s.pair(i, x, y);
    s.clouds(g, gt);
    const double t = m.time_homogeneous ? 0.0 : s.eng.uniform(0.0, 10.0);
    guarded(i, x, y, [&] { record(r, violation_monotone(m, c, t, x, y, g, gt), "monotonicity", x, y, g, gt); });
  }
  finish(r, opt);
  return r;
}

ConditionReport check_partial_dissipativity_H(const CoefficientModel& m, const DissipativityConstants& c,
                                              const CheckOptions& opt) {
  validate_options(opt);
  c.validate();
  Sampler s{rng::Engine(opt.seed, rng::Stream::checker), m.dim, opt.radius, opt.max_cloud};
  ConditionReport r;
  Vector x, y;
  EmpiricalMeasure g, gt;
  for (std::size_t i = 0; i < opt.n_pairs; ++i) {
    s.pair(i, x, y);
    s.clouds(g, gt);
    guarded(i, x, y, [&] {
      record(r, violation_partial_dissipative(m, c, x, y, g, gt), "partial_dissipativity", x, y, g, gt);
      record(r, violation_ellipticity(m, c, g), "ellipticity", x, y, g, gt);
      record(r, violation_ellipticity(m, c, gt), "ellipticity", x, y, g, gt);
    });
  }
  finish(r, opt);
  return r;
}

ConditionReport check_kinetic_C(const CoefficientModel& m, const KineticConstants& kc, double KI,
                                const CheckOptions& opt) {
  validate_options(opt);
  kc.validate();
  if (m.kind != Kind::kinetic) throw InvalidArgument("check_kinetic_C needs a kinetic model");
  if (!(KI >= 0) || !std::isfinite(KI)) throw InvalidArgument("KI must be >= 0");
  Sampler s{rng::Engine(opt.seed, rng::Stream::checker), m.dim, opt.radius, opt.max_cloud};
  ConditionReport r;
  Vector z, zb;
  EmpiricalMeasure g, gt;
  for (std::size_t i = 0; i < opt.n_pairs; ++i) {
    s.pair(i, z, zb);
    s.clouds(g, gt);
    guarded(i, z, zb, [&] {
      record(r, violation_kinetic_lipschitz(m, kc, KI, z, zb, g, gt), "lipschitz", z, zb, g, gt);
      record(r, violation_kinetic_dissipative(m, kc, z, zb, g), "kinetic_dissipativity", z, zb, g, g);
    });
  }
  finish(r, opt);
  return r;
}

double lipschitz_probe(const CoefficientModel& m, const EmpiricalMeasure& mu, const CheckOptions& opt) {
  validate_options(opt);
  Sampler s{rng::Engine(opt.seed, rng::Stream::checker), m.dim, opt.radius, opt.max_cloud};
  const auto f = m.freeze(0.0, mu);
  const int d = m.position_dim();
  const bool kin = m.kind == Kind::kinetic;
  double best = 0.0;
  Vector z, zb;
  for (std::size_t i = 0; i < opt.n_pairs; ++i) {
    s.pair(i, z, zb);
    const double dist = (z - zb).norm();
    if (dist == 0.0) continue;
    Vector b1 = eval_drift(f, 0.0, z), b2 = eval_drift(f, 0.0, zb);
    const double num = kin ? (b1.tail(d) - b2.tail(d)).norm() : (b1 - b2).norm();
    best = std::max(best, num / dist);
  }
  return best;
}

}  // namespace mvlab::coeff
