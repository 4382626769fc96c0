#pragma once

#include <optional>
#include <vector>

#include "mvlab/simulator.hpp"

namespace mvlab::inv {

using coeff::CoefficientModel;
using coeff::DissipativityConstants;
using measures::EmpiricalMeasure;
using sim::SimConfig;

/// 10/K2 when constants are known, else 20 time units.
double default_burn_in(const DissipativityConstants* c);

/// ε = K2/(4δ1) for the exponential moment e^{ε|x|²}.
double exp_moment_epsilon(const DissipativityConstants& c);

/// |fitted end - fitted start| / mean of a least-squares line through the last half of the series.
double relative_drift(const std::vector<double>& times, const std::vector<double>& values);

struct PhiResult {
  EmpiricalMeasure cloud;
  double burn_in_used = 0.0;
  std::vector<double> times;          ///< recorded times at or after burn-in
  std::vector<double> second_moment;  ///< ‖cloud‖₂² at those times
  std::vector<double> exp_moment;     ///< mean of e^{ε|x|²}; empty without constants
  double epsilon = 0.0;
  bool exp_overflow = false;
  double second_moment_drift = 0.0;
  double exp_moment_drift = 0.0;
  /// False when the second moment still drifts by more than 5% over the last half.
  bool stabilized = true;
};

/// Invariant law of the SDE frozen at mu, approximated by the terminal cloud of a
/// run started from a standard normal cloud (seeded by cfg.seed).
PhiResult phi(const CoefficientModel& m, const EmpiricalMeasure& mu, const SimConfig& cfg, double burn_in,
              const DissipativityConstants* c = nullptr);

/// W₂ between phi runs on the same input with independent seeds.
double mc_floor(const CoefficientModel& m, const EmpiricalMeasure& mu, const SimConfig& cfg, double burn_in,
                std::size_t cap = measures::kExactCap);

struct FixedPointResult {
  EmpiricalMeasure cloud;
  std::vector<double> gaps;  ///< W₂ between consecutive iterates
  double floor = 0.0;
  bool converged = false;
};

/// Picard iteration mu_{k+1} = phi(mu_k) with the same seed at every iterate.
/// Gaps are exact W₂ on subsamples of at most `cap` points (same indices on both sides).
/// The MC floor is estimated when not supplied.
FixedPointResult picard_fixed_point(const CoefficientModel& m, const EmpiricalMeasure& mu0, const SimConfig& cfg,
                                    double burn_in, double tol, std::size_t max_iter,
                                    std::optional<double> floor = {}, std::size_t cap = measures::kExactCap);

struct ContractionEstimate {
  double ratio = 0.0;
  double numerator = 0.0;    ///< W₂(Φμ₁, Φμ₂)
  double denominator = 0.0;  ///< W₂(μ₁, μ₂)
  double floor = 0.0;
};

/// W₂(Φμ₁, Φμ₂)/W₂(μ₁, μ₂) with common random numbers. Throws when the
/// denominator is below 10x the MC floor.
ContractionEstimate contraction_estimate(const CoefficientModel& m, const EmpiricalMeasure& mu1,
                                         const EmpiricalMeasure& mu2, const SimConfig& cfg, double burn_in,
                                         std::size_t cap = measures::kExactCap);

}  // namespace mvlab::inv
