#include "mvlab/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace mvlab::kin {

namespace {

void require_kinetic(const CoefficientModel& m) {
  if (m.kind != coeff::Kind::kinetic) throw InvalidArgument("model '" + m.name + "' is not kinetic");
}

void require_velocity_noise(const CoefficientModel& m, const EmpiricalMeasure& mu) {
  const Matrix s = m.diffusion(0.0, mu);
  if (!s.topRows(m.position_dim()).isZero(0.0))
    throw InvalidArgument("model '" + m.name + "' injects noise into the position block");
}

}  // namespace

sim::TrajectoryEnsemble simulate_kinetic(const CoefficientModel& m, const EmpiricalMeasure& init,
                                         const SimConfig& cfg) {
  require_kinetic(m);
  require_velocity_noise(m, init);
  return sim::simulate_mean_field(m, init, cfg);
}

EmpiricalMeasure simulate_kinetic(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg,
                                  const sim::Observer& observe) {
  require_kinetic(m);
  require_velocity_noise(m, init);
  return sim::simulate_mean_field(m, init, cfg, observe);
}

double lyapunov_psi(const KineticConstants& kc, const Vector& z, const Vector& zbar) {
  kc.validate();
  if (z.size() != zbar.size() || z.size() % 2 != 0) throw DimensionError("lyapunov_psi: states must be in R^{2d}");
  const auto d = z.size() / 2;
  const Vector dx = z.head(d) - zbar.head(d), dy = z.tail(d) - zbar.tail(d);
  if (dx.isZero(0.0) && dy.isZero(0.0)) return 0.0;
  const double sq = 0.5 * kc.r * kc.r * dx.squaredNorm() + 0.5 * dy.squaredNorm() + kc.r * kc.r0 * dx.dot(dy);
  if (sq < -1e-12) throw InvalidArgument("lyapunov_psi: negative radicand");
  return std::sqrt(std::max(0.0, sq));
}

double c_psi(const KineticConstants& kc) {
  kc.validate();
  Eigen::Matrix2d q;
  q << 0.5 * kc.r * kc.r, 0.5 * kc.r * kc.r0, 0.5 * kc.r * kc.r0, 0.5;
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(q).eigenvalues();
  if (!(ev(0) > 0)) throw InvalidArgument("c_psi: the quadratic form is not positive definite");
  return std::max(ev(1), 1.0 / ev(0));
}

void GridSpec::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min) || !std::isfinite(x_max - x_min) || !std::isfinite(y_max - y_min))
    throw InvalidArgument("grid bounds must be finite and increasing");
  if (nx < 3 || ny < 3) throw InvalidArgument("grid needs at least 3 nodes per axis");
}

double GridSpec::weight(int i, int j) const {
  const double wx = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
  const double wy = (j == 0 || j == ny - 1) ? 0.5 : 1.0;
  return wx * wy * hx() * hy();
}

double GridDensity::value(int i, int j) const {
  return std::exp(log_values[static_cast<std::size_t>(i) * grid.ny + j]);
}

double GridDensity::mass() const {
  long double s = 0;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.ny; ++j) s += grid.weight(i, j) * value(i, j);
  return static_cast<double>(s);
}

GaussianLaw GridDensity::moments() const {
  long double m0 = 0, mx = 0, my = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.ny; ++j) {
      const long double w = grid.weight(i, j) * value(i, j);
      const double x = grid.x(i), y = grid.y(j);
      m0 += w;
      mx += w * x;
      my += w * y;
      sxx += w * x * x;
      sxy += w * x * y;
      syy += w * y * y;
    }
  mx /= m0;
  my /= m0;
  Matrix c(2, 2);
  c(0, 0) = static_cast<double>(sxx / m0 - mx * mx);
  c(0, 1) = c(1, 0) = static_cast<double>(sxy / m0 - mx * my);
  c(1, 1) = static_cast<double>(syy / m0 - my * my);
  return GaussianLaw(Eigen::Vector2d(static_cast<double>(mx), static_cast<double>(my)), c);
}

GridDensity explicit_invariant_density(const Potential& V, const Interaction& W, const EmpiricalMeasure& mu,
                                       const GridSpec& grid, double beta) {
  grid.validate();
  if (!(beta > 0) || !std::isfinite(beta)) throw InvalidArgument("beta must be > 0");
  if (mu.dim() != 2) throw DimensionError("explicit_invariant_density: mu must live on R^2 (position, velocity)");
  const int nx = grid.nx, ny = grid.ny;

  // The interaction enters only through the position, so average once per column.
  std::vector<double> ux(static_cast<std::size_t>(nx));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < nx; ++i) {
    const double x = grid.x(i);
    long double s = 0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
      const double z = mu.particle(k)(0);
      s += W(x, z) - W(0.0, z);
    }
    ux[static_cast<std::size_t>(i)] = V(x) + static_cast<double>(s / static_cast<long double>(mu.size()));
  }

  GridDensity g;
  g.grid = grid;
  g.beta = beta;
  g.log_values.resize(static_cast<std::size_t>(nx) * ny);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double y = grid.y(j);
      const double e = -beta * (0.5 * y * y + ux[static_cast<std::size_t>(i)]);
      if (!std::isfinite(e))
        throw EvaluationError("non-finite exponent at grid node (" + std::to_string(grid.x(i)) + ", " +
                              std::to_string(y) + ")");
      g.log_values[static_cast<std::size_t>(i) * ny + j] = e;
      top = std::max(top, e);
    }
  long double total = 0, ring = 0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const long double w = grid.weight(i, j) * std::exp(g.log_values[static_cast<std::size_t>(i) * ny + j] - top);
      total += w;
      if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) ring += w;
    }
  if (ring > 1e-4L * total) throw InvalidArgument("density has mass on the grid boundary; enlarge the grid");
  g.log_partition = top + static_cast<double>(std::log(total));
  for (double& v : g.log_values) v -= g.log_partition;
  return g;
}

GridDensity explicit_invariant_density(const coeff::GradientKinetic& spec, const EmpiricalMeasure& mu,
                                       const GridSpec& grid) {
  if (spec.d != 1) throw InvalidArgument("explicit_invariant_density: grid densities need d = 1");
  auto V = [spec](double x) { return spec.V(Vector::Constant(1, x)); };
  auto W = [spec](double x, double z) { return spec.W(Vector::Constant(1, x), Eigen::Vector2d(z, 0.0)); };
  return explicit_invariant_density(V, W, mu, grid, spec.beta());
}

double grid_entropy(const GaussianLaw& g, const GridDensity& rho) {
  if (g.dim() != 2) throw DimensionError("grid_entropy: law must live on R^2");
  const auto& gr = rho.grid;
  const Eigen::LLT<Matrix> llt(g.cov);
  if (llt.info() != Eigen::Success || g.cov.determinant() <= 0)
    throw InvalidArgument("grid_entropy: covariance must be nonsingular");
  auto tail = [](double lo, double hi, double m, double s) {
    return 0.5 * std::erfc((m - lo) / (s * std::numbers::sqrt2)) + 0.5 * std::erfc((hi - m) / (s * std::numbers::sqrt2));
  };
  const double off = tail(gr.x_min, gr.x_max, g.mean(0), std::sqrt(g.cov(0, 0))) +
                     tail(gr.y_min, gr.y_max, g.mean(1), std::sqrt(g.cov(1, 1)));
  if (off > 1e-6) throw InvalidArgument("grid_entropy: grid too small for the law (outside mass " + std::to_string(off) + ")");

  const Matrix P = g.cov.inverse();
  const double log_norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(g.cov.determinant());
  std::vector<long double> rows(static_cast<std::size_t>(gr.nx));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < gr.nx; ++i) {
    long double s = 0;
    for (int j = 0; j < gr.ny; ++j) {
      const Eigen::Vector2d u(gr.x(i) - g.mean(0), gr.y(j) - g.mean(1));
      const double lphi = log_norm - 0.5 * u.dot(P * u);
      const double phi = std::exp(lphi);
      if (phi == 0.0) continue;
      s += gr.weight(i, j) * phi * (lphi - rho.log_values[static_cast<std::size_t>(i) * gr.ny + j]);
    }
    rows[static_cast<std::size_t>(i)] = s;
  }
  long double total = 0;
  for (long double r : rows) total += r;
  const double ent = static_cast<double>(total);
  if (ent < -1e-8) throw ConvergenceError("grid_entropy: quadrature gave a negative entropy; refine the grid");
  return std::max(0.0, ent);
}

}  // namespace mvlab::kin
