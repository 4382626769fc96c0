#pragma once

#include <functional>
#include <vector>

#include "mvlab/simulator.hpp"

namespace mvlab::kin {

using coeff::CoefficientModel;
using coeff::KineticConstants;
using measures::EmpiricalMeasure;
using measures::GaussianLaw;
using sim::SimConfig;

/// Euler run of a kinetic model; rejects noise that reaches the position block.
sim::TrajectoryEnsemble simulate_kinetic(const CoefficientModel& m, const EmpiricalMeasure& init,
                                         const SimConfig& cfg);
EmpiricalMeasure simulate_kinetic(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg,
                                  const sim::Observer& observe);

/// ψ(z, z̄) = √(r²|Δx|²/2 + |Δy|²/2 + r r₀⟨Δx, Δy⟩) for states z = (x, y) ∈ R^{2d}.
double lyapunov_psi(const KineticConstants& kc, const Vector& z, const Vector& zbar);

/// Smallest C with q/C <= ψ² <= C q, q = |Δx|² + |Δy|².
double c_psi(const KineticConstants& kc);

/// Node grid on [x_min, x_max] x [y_min, y_max] (one position and one velocity coordinate).
struct GridSpec {
  double x_min = -8, x_max = 8;
  double y_min = -8, y_max = 8;
  int nx = 401, ny = 401;

  void validate() const;
  double hx() const { return (x_max - x_min) / (nx - 1); }
  double hy() const { return (y_max - y_min) / (ny - 1); }
  double x(int i) const { return x_min + i * hx(); }
  double y(int j) const { return y_min + j * hy(); }
  /// Trapezoid weight of node (i, j).
  double weight(int i, int j) const;
};

struct GridDensity {
  GridSpec grid;
  std::vector<double> log_values;  ///< log ρ at node (i, j), index i * ny + j
  double log_partition = 0.0;      ///< log Z₀
  double beta = 1.0;

  double value(int i, int j) const;
  /// Trapezoid integral of ρ (1 up to rounding).
  double mass() const;
  /// Mean and covariance of ρ by the same rule.
  GaussianLaw moments() const;
};

using Potential = std::function<double(double x)>;
using Interaction = std::function<double(double x, double z)>;

/// ρ ∝ exp(-β(y²/2 + V(x) + mean_z[W(x, z) - W(0, z)])) over the positions z of mu,
/// normalized by the trapezoid sum. Throws when more than 1e-4 of the mass sits on the
/// outermost ring of nodes.
GridDensity explicit_invariant_density(const Potential& V, const Interaction& W, const EmpiricalMeasure& mu,
                                       const GridSpec& grid, double beta = 1.0);

/// Same for a one-dimensional gradient kinetic model, with β = 2·friction/σ².
GridDensity explicit_invariant_density(const coeff::GradientKinetic& spec, const EmpiricalMeasure& mu,
                                       const GridSpec& grid);

/// Ent(g | ρ) by trapezoid quadrature; throws when g puts more than 1e-6 of its mass off the grid.
double grid_entropy(const GaussianLaw& g, const GridDensity& rho);

}  // namespace mvlab::kin
