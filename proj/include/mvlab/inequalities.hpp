#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvlab/simulator.hpp"

namespace mvlab::ineq {

using coeff::CoefficientModel;
using coeff::DissipativityConstants;
using measures::EmpiricalMeasure;
using measures::GaussianLaw;
using sim::SimConfig;

// ---------------------------------------------------------------------------
// Decay fits

struct DecayFit {
  double lambda = 0.0;  ///< decay rate, minus the slope of log value
  double c = 0.0;       ///< prefactor e^{intercept}
  double r2 = 0.0;
  std::size_t points_used = 0;
  std::size_t points_excluded = 0;  ///< values at or below the floor
};

/// Least squares on (t, log v) over the points with v > floor; needs at least 3.
DecayFit decay_fit(const std::vector<double>& times, const std::vector<double>& values, double floor = 0.0);

struct DecaySeries {
  std::vector<double> times;
  std::vector<double> values;
  double floor = 0.0;
  std::optional<DecayFit> fit;  ///< unset when fewer than 3 points clear the floor
};

/// W₂ (exact, on seeded subsamples of at most `cap` points) between snapshots of a
/// mean-field run from mu0 and mu_inf at the requested times. The floor is the W₂
/// between two disjoint halves of a subsample of mu_inf.
DecaySeries w2_decay_experiment(const CoefficientModel& m, const EmpiricalMeasure& mu0,
                                const EmpiricalMeasure& mu_inf, const SimConfig& cfg,
                                const std::vector<double>& sample_times, std::size_t cap = measures::kExactCap);

/// W₂(law of X_t, stationary law) for the 1D OU process dX = -θX dt + σ dW started at x0.
double ou_point_w2(double x0, double theta, double sigma, double t);

// ---------------------------------------------------------------------------
// Linear (Gaussian-closed) dynamics dZ = A Z dt + S dW

struct LinearSpec {
  Matrix A;
  Matrix S;
};

/// Reads A and S off a measure-free model with linear drift; throws InvalidArgument otherwise.
LinearSpec linear_spec(const CoefficientModel& m);

/// Mean and covariance at time t by RK4 with step t/2048.
GaussianLaw linear_moment_oracle(const Matrix& A, const Matrix& S, const Vector& m0, const Matrix& M0, double t);

/// Ent(law_t | invariant) along the linear flow from mu0, with a decay fit (floor 0).
DecaySeries entropy_decay_experiment(const LinearSpec& spec, const GaussianLaw& mu0, const GaussianLaw& invariant,
                                     const std::vector<double>& sample_times);

struct TalagrandResult {
  double lhs = 0.0;    ///< W₂²
  double rhs = 0.0;    ///< C·Ent
  double ratio = 0.0;  ///< lhs/rhs; NaN when both vanish
  bool equality = false;  ///< mu0 equals the invariant law (0/0)
};

TalagrandResult talagrand_check(const GaussianLaw& mu0, const GaussianLaw& invariant, double C);

// ---------------------------------------------------------------------------
// Semigroup log-Sobolev inequality

struct TestFunction {
  std::string name;
  std::function<double(const Vector&)> f;
  std::function<Vector(const Vector&)> grad;
};

/// 2+sin(x₁), 1+e^{-|x|²}, 2+tanh(x₁).
std::vector<TestFunction> lsi_test_bank();

struct LsiGapReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double stderr_lhs = 0.0;
  double stderr_rhs = 0.0;
  double t = 0.0;

  bool holds(double n_sigma = 3.0) const { return lhs <= rhs + n_sigma * (stderr_lhs + stderr_rhs); }
};

/// Monte Carlo estimate of both sides of
///   P_t(f log f)(x) - P_t f(x) log P_t f(x) <= (2δ₁/K₁)(e^{K₁t} - 1) P_t|∇f^{1/2}|²(x)
/// from n_mc paths of the SDE frozen at `frozen`, stepping cfg.dt (the last step may be shorter).
LsiGapReport semigroup_lsi_gap(const CoefficientModel& m, const EmpiricalMeasure& frozen, const TestFunction& f,
                               const Vector& x, double t, std::size_t n_mc, const DissipativityConstants& c,
                               const SimConfig& cfg);

// ---------------------------------------------------------------------------
// Harnack coupling

/// p₀ with (p₀ - 1)⁻¹ = ½ ∧ δ₂/(256 δ₁).
double harnack_p0(const DissipativityConstants& c);

/// exp(K₂|x-y|²/(64δ₁(e^{K₂t₀} - 1)) + (K₁+K₂)² r₀² t₀/(128δ₁)).
double harnack_r_bound(const DissipativityConstants& c, double gap, double t0);

struct CouplingResult {
  std::vector<double> times;
  std::vector<double> mean_gap;   ///< mean |X_t - Y_t| over paths
  double terminal_gap = 0.0;       ///< max over paths at t₀ - δ_stop
  double terminal_gap_mean = 0.0;
  double r_moment_estimate = 0.0;  ///< E R^{p/(p-1)}
  double r_moment_stderr = 0.0;
  double r_moment_bound = 0.0;
  double p_used = 0.0;
  double p0 = 0.0;
  std::size_t n_paths = 0;
  std::size_t clipped_paths = 0;   ///< paths where the correction hit the clip
  std::size_t excluded_paths = 0;  ///< non-finite Girsanov weight
};

struct HarnackOptions {
  double delta_stop = 1e-3;
  double clip = 1e6;
};

/// Coupled pair under the reference measure: Y is the frozen SDE from y, X from x
/// carries the extra drift -σσ̂(X - Y)/ξ_t with ξ_t = (e^{K₂(t₀-t)} - 1)/K₂, and
/// R = exp(∫⟨η, dW̃⟩ + ½∫|η|²dt), η = -σ̂(X - Y)/ξ_t. Steps are min(dt, ξ_t/10).
CouplingResult harnack_coupling(const CoefficientModel& m, const EmpiricalMeasure& frozen,
                                const DissipativityConstants& c, const Vector& x, const Vector& y, double t0,
                                double p, const SimConfig& cfg, std::size_t n_paths, const HarnackOptions& opt = {});

}  // namespace mvlab::ineq
