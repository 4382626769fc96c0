#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvlab/measures.hpp"
#include "mvlab/types.hpp"

namespace mvlab::coeff {

using measures::EmpiricalMeasure;

enum class Kind { generic, kinetic };

/// Drift and noise matrix with the measure argument bound.
struct FrozenCoefficients {
  DriftFn drift;
  Matrix sigma;  ///< dim x noise_dim
};

using CloudPtr = std::shared_ptr<const EmpiricalMeasure>;
using Freezer = std::function<FrozenCoefficients(double t, CloudPtr mu)>;

/// Parameters of the gradient kinetic model
///   dX = Y dt,  dY = (-friction Y - ∇V(X) - ∫∇ₓW(X,z) μ(dz)) dt + sigma dW
/// with V(x) = k|x-c|²/2 + a Σ cos(x_i) and W(x,z) = eps x·z_x + kappa/2 |x-z_x|².
struct GradientKinetic {
  int d = 1;
  double k = 1.0;
  double c = 0.0;
  double a = 0.0;
  double eps = 0.0;
  double kappa = 0.0;
  double friction = 1.0;
  double sigma = 1.4142135623730951;

  double V(const Vector& x) const;
  Vector grad_V(const Vector& x) const;
  /// W(x, z) with z in R^{2d}; only the position block of z enters.
  double W(const Vector& x, const Vector& z) const;
  /// Inverse temperature of the Gibbs law exp(-beta (|y|²/2 + V + ∫W)).
  double beta() const { return 2.0 * friction / (sigma * sigma); }
  /// Linear when the cosine term vanishes.
  bool linear() const { return a == 0.0; }
};

class CoefficientModel {
 public:
  std::string name;
  int dim = 1;        ///< state dimension (2d for kinetic models)
  int noise_dim = 1;
  Kind kind = Kind::generic;
  bool time_homogeneous = true;
  bool measure_dependent = false;
  bool superlinear = false;      ///< plain Euler may explode; prefer the tamed scheme
  bool pairwise = false;         ///< drift needs the full cloud (O(N²) per step)
  std::optional<GradientKinetic> gradient_kinetic;
  Freezer freezer;

  FrozenCoefficients freeze(double t, CloudPtr mu) const;
  FrozenCoefficients freeze(double t, const EmpiricalMeasure& mu) const;

  Vector drift(double t, const Vector& x, const EmpiricalMeasure& mu) const;
  Matrix diffusion(double t, const EmpiricalMeasure& mu) const;

  /// Position dimension d of a kinetic model.
  int position_dim() const { return kind == Kind::kinetic ? dim / 2 : dim; }
};

using MeasureDrift = std::function<void(double t, ConstVecRef x, const EmpiricalMeasure& mu, VecRef out)>;
using MeasureDiffusion = std::function<Matrix(double t, const EmpiricalMeasure& mu)>;

/// Wraps plain callables into a model. The drift sees the whole cloud at each call.
CoefficientModel make_model(std::string name, int dim, int noise_dim, MeasureDrift drift,
                            MeasureDiffusion diffusion, bool measure_dependent = true,
                            bool superlinear = false);

/// Kinetic model from a velocity drift b(x, y, mu) in R^d and a d x n noise matrix;
/// the position block of the drift is the velocity, the position rows of sigma are zero.
CoefficientModel make_kinetic_model(std::string name, int d, int noise_dim, MeasureDrift velocity_drift,
                                    MeasureDiffusion velocity_sigma, bool measure_dependent = true);

using Params = std::map<std::string, double>;

struct ParamInfo {
  std::string name;
  double default_value;
  std::string description;
};

struct BuiltinInfo {
  std::string name;
  std::string summary;
  std::vector<ParamInfo> params;
};

const std::vector<BuiltinInfo>& builtin_catalog();

/// Builds a named model; unknown names or parameters throw InvalidArgument.
CoefficientModel builtin_model(const std::string& name, const Params& params = {});

CoefficientModel ou(double theta, double sigma, int dim = 1);
CoefficientModel mean_field_linear(double a, double kappa, double sigma, int dim = 1);
/// b = ∇V + ∫∇W(x-y)μ(dy) with V = -|x|⁴+|x|², ∇W(z) = -w z/√(1+|z|²),
/// σ(μ) = (I + ∫∇U∇Uᵀdμ)^{1/2} with U_i(x) = u tanh(x_i).
CoefficientModel exabc(double w, double u, int dim = 1);
CoefficientModel kinetic_gradient(const GradientKinetic& spec);

// ---------------------------------------------------------------------------
// Structural conditions

struct DissipativityConstants {
  double K1 = 1.0;
  double K2 = 1.0;
  double KI = 0.0;
  double r0 = 0.0;
  double delta1 = 1.0;
  double delta2 = 1.0;

  void validate() const;
};

struct KineticConstants {
  double r = 1.0;
  double r0 = 0.0;
  double theta = 0.0;
  double R = 0.0;
  double KM = 0.0;

  void validate() const;
};

struct Witness {
  std::string condition;
  Vector x, y;
  RowMatrix gamma, gamma_tilde;
};

struct ConditionReport {
  bool satisfied = true;
  double worst_violation = -std::numeric_limits<double>::infinity();
  std::size_t n_samples = 0;
  double tolerance = 1e-9;
  std::optional<Witness> witness;
};

struct CheckOptions {
  std::size_t n_pairs = 1000;
  double radius = 1.0;
  std::uint64_t seed = 0;
  double tolerance = 1e-9;
  std::size_t max_cloud = 8;
};

/// Monotonicity condition: 2⟨b(x,γ)-b(y,γ̃),x-y⟩ + ‖σ(γ)-σ(γ̃)‖²_HS - K₁|x-y|² - K_I W₂(γ,γ̃)².
double violation_monotone(const CoefficientModel& m, const DissipativityConstants& c, double t,
                          const Vector& x, const Vector& y, const EmpiricalMeasure& g,
                          const EmpiricalMeasure& gt);

/// Partially dissipative condition with the indicator split at r₀.
double violation_partial_dissipative(const CoefficientModel& m, const DissipativityConstants& c,
                                     const Vector& x, const Vector& y, const EmpiricalMeasure& g,
                                     const EmpiricalMeasure& gt);

/// max(δ₂ - λ_min(σσ*), λ_max(σσ*) - δ₁).
double violation_ellipticity(const CoefficientModel& m, const DissipativityConstants& c,
                             const EmpiricalMeasure& g);

/// Kinetic dissipativity for one pair of phase points; -inf when the pair is closer than R.
double violation_kinetic_dissipative(const CoefficientModel& m, const KineticConstants& kc,
                                     const Vector& z, const Vector& zbar, const EmpiricalMeasure& mu);

/// Lipschitz bound |b(z,γ)-b(z̄,γ̃)| + ‖σ(γ)-σ(γ̃)‖_HS - K_M|z-z̄| - K_I W₂(γ,γ̃) on the velocity drift.
double violation_kinetic_lipschitz(const CoefficientModel& m, const KineticConstants& kc, double KI,
                                   const Vector& z, const Vector& zbar, const EmpiricalMeasure& g,
                                   const EmpiricalMeasure& gt);

ConditionReport check_monotonicity_A(const CoefficientModel& m, const DissipativityConstants& c,
                                     const CheckOptions& opt);
ConditionReport check_partial_dissipativity_H(const CoefficientModel& m, const DissipativityConstants& c,
                                              const CheckOptions& opt);
ConditionReport check_kinetic_C(const CoefficientModel& m, const KineticConstants& kc, double KI,
                                const CheckOptions& opt);

/// Largest sampled ratio |b(z,μ)-b(z̄,μ)|/|z-z̄| of the (velocity) drift at a fixed measure.
double lipschitz_probe(const CoefficientModel& m, const EmpiricalMeasure& mu, const CheckOptions& opt);

}  // namespace mvlab::coeff
