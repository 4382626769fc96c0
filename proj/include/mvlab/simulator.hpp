#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvlab/coefficients.hpp"
#include "mvlab/measures.hpp"
#include "mvlab/rng.hpp"

namespace mvlab::sim {

using coeff::CoefficientModel;
using coeff::FrozenCoefficients;
using measures::EmpiricalMeasure;

enum class Scheme { euler, tamed_euler };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct SimConfig {
  double dt = 1e-3;
  double t_end = 1.0;
  std::size_t n_particles = 1000;
  std::uint64_t seed = 0;
  std::optional<Scheme> scheme;  ///< unset: tamed for superlinear models, Euler otherwise
  std::size_t record_every = 1;
  /// Seeded per-step subsample of the cloud used for the interaction (0 = full cloud).
  std::size_t interaction_batch = 0;

  void validate() const;
  std::uint64_t n_steps() const;
  Scheme scheme_for(const CoefficientModel& m) const;
};

struct TrajectoryEnsemble {
  std::vector<double> times;
  std::vector<EmpiricalMeasure> clouds;

  const EmpiricalMeasure& final_cloud() const { return clouds.back(); }
};

/// Sets the OpenMP worker count used by all particle loops (<= 0 keeps the default).
void set_num_threads(int n);
int num_threads();

/// One time step for a single particle: x ← x + dt·b̄(x) + σ√dt·Z with Z drawn
/// from the counter address (step, index). For kinetic models the position
/// block is advanced as x + dt·y and only the velocity drift is tamed.
class Stepper {
 public:
  Stepper(const CoefficientModel& m, Scheme scheme, double dt, std::uint64_t seed);

  /// Per-thread work buffers.
  struct Scratch {
    Vector b, z, sz;
  };
  Scratch scratch() const;

  void step(const FrozenCoefficients& f, double t, std::uint64_t k, std::uint64_t index, ConstVecRef x,
            VecRef out, Scratch& s) const;

  /// Same update with the standard normal vector already in s.z.
  void step_with_noise(const FrozenCoefficients& f, double t, ConstVecRef x, VecRef out, Scratch& s) const;

  /// Noise vector for (step, index).
  void noise(std::uint64_t k, std::uint64_t index, Vector& z) const;

  double dt() const { return dt_; }

 private:
  int dim_;
  int noise_dim_;
  int pos_dim_;
  bool kinetic_;
  Scheme scheme_;
  double dt_;
  double sqrt_dt_;
  rng::CounterStream stream_;
};

/// N-particle approximation: each particle sees the current empirical cloud.
TrajectoryEnsemble simulate_mean_field(const CoefficientModel& m, const EmpiricalMeasure& init,
                                       const SimConfig& cfg);

/// Decoupled SDE with the measure argument held at `frozen`.
TrajectoryEnsemble simulate_frozen(const CoefficientModel& m, const EmpiricalMeasure& frozen,
                                   const EmpiricalMeasure& init, const SimConfig& cfg);

/// Called at time 0 and on every recorded step with the current state.
using Observer = std::function<void(double t, const RowMatrix& state)>;

/// Streaming variants: nothing is stored, the terminal cloud is returned.
EmpiricalMeasure simulate_mean_field(const CoefficientModel& m, const EmpiricalMeasure& init, const SimConfig& cfg,
                                     const Observer& observe);
EmpiricalMeasure simulate_frozen(const CoefficientModel& m, const EmpiricalMeasure& frozen,
                                 const EmpiricalMeasure& init, const SimConfig& cfg, const Observer& observe);

struct SyncPairResult {
  std::vector<double> times;
  RowMatrix gaps;  ///< n_paths x times.size(), |X_t - Y_t|
};

/// cfg.n_particles independent pairs (X, Y) from (x, y), each pair driven by one shared noise path.
SyncPairResult synchronous_pair(const CoefficientModel& m, const EmpiricalMeasure& frozen, const Vector& x,
                                const Vector& y, const SimConfig& cfg);

// ---------------------------------------------------------------------------
// Drift regularization

/// x ↦ b̃⁽ⁿ⁾(x) + ½K(t)x with b̃ = base − ½K·id and b̃⁽ⁿ⁾ = n[(id − b̃/n)⁻¹ − id].
DriftFn yosida_drift(DriftFn base, int dim, double n, std::function<double(double)> K);

/// Single resolvent solve (id − b̃/n)⁻¹(x) at time t; throws ConvergenceError after 200 iterations.
Vector yosida_resolvent(const DriftFn& tilde_b, double t, const Vector& x, double n);

enum class Mollifier { uniform, bump };

struct Quadrature {
  int panels = 2;              ///< Gauss-Legendre panels per axis (32 nodes each)
  std::size_t mc_points = 4096;  ///< used when d > 2
  std::uint64_t seed = 0;
};

/// Tensor quadrature rule for ρ on its support [-1,1]^d, weights already multiplied by ρ.
struct MollifierRule {
  RowMatrix nodes;
  std::vector<double> weights;
  double mass = 1.0;            ///< ∫ρ by this rule before renormalization
  double first_abs_moment = 0.0;  ///< ∫|u|ρ(u)du
};

MollifierRule mollifier_rule(Mollifier rho, int dim, const Quadrature& q = {});

/// x ↦ ∫ b(x − u/m) ρ(u) du.
DriftFn mollify_drift(DriftFn base, int dim, double m, Mollifier rho, const Quadrature& q = {});

struct Regularization {
  enum class Kind { none, yosida, mollified } kind = Kind::none;
  double level = 0.0;  ///< n for Yosida, m for mollification
  double K = 0.0;      ///< one-sided constant for Yosida
  Mollifier rho = Mollifier::uniform;
  Quadrature quad{};

  std::string label() const;
};

/// Model whose frozen drift is replaced by its regularization.
CoefficientModel regularize(const CoefficientModel& m, const Regularization& r);

struct RegularizationRow {
  std::string label;
  double level = 0.0;
  double ms_gap = 0.0;   ///< mean over particles of |X_T^reg − X_T|²
  double rms_gap = 0.0;
};

/// Terminal gaps between regularized and unregularized frozen runs sharing noise.
std::vector<RegularizationRow> regularization_convergence(const CoefficientModel& m,
                                                          const std::vector<Regularization>& levels,
                                                          const EmpiricalMeasure& init, const SimConfig& cfg,
                                                          const std::optional<EmpiricalMeasure>& frozen = {});

}  // namespace mvlab::sim
