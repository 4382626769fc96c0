#include "mvlab/invariant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvlab::inv {

namespace {

constexpr std::uint64_t kFloorSalt = 0xA5A5A5A55A5A5A5Aull;
constexpr std::uint64_t kSubsampleSeed = 0x5eed;

double w2_sub(const EmpiricalMeasure& a, const EmpiricalMeasure& b, std::size_t cap) {
  const std::size_t n = std::min({cap, a.size(), b.size()});
  return measures::w2_exact(a.subsample(n, kSubsampleSeed), b.subsample(n, kSubsampleSeed), cap);
}

}  // namespace

double default_burn_in(const DissipativityConstants* c) { return c ? 10.0 / c->K2 : 20.0; }

double exp_moment_epsilon(const DissipativityConstants& c) {
  c.validate();
  return c.K2 / (4.0 * c.delta1);
}

double relative_drift(const std::vector<double>& times, const std::vector<double>& values) {
  if (times.size() != values.size()) throw DimensionError("relative_drift: series lengths differ");
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const std::size_t start = n / 2 == n - 1 ? n - 2 : n / 2;
  long double st = 0, sv = 0;
  const auto m = static_cast<long double>(n - start);
  for (std::size_t i = start; i < n; ++i) {
    st += times[i];
    sv += values[i];
  }
  const long double tb = st / m, vb = sv / m;
  long double sxx = 0, sxy = 0;
  for (std::size_t i = start; i < n; ++i) {
    sxx += (times[i] - tb) * (times[i] - tb);
    sxy += (times[i] - tb) * (values[i] - vb);
  }
  if (sxx == 0 || vb == 0) return 0.0;
  const long double slope = sxy / sxx;
  return static_cast<double>(std::abs(slope * (times[n - 1] - times[start]) / vb));
}

PhiResult phi(const CoefficientModel& m, const EmpiricalMeasure& mu, const SimConfig& cfg, double burn_in,
              const DissipativityConstants* c) {
  cfg.validate();
  if (!m.time_homogeneous) throw InvalidArgument("phi needs a time-homogeneous model");
  if (!(burn_in >= 0) || !(burn_in < cfg.t_end))
    throw InvalidArgument("burn_in must lie in [0, t_end)");
  PhiResult r;
  r.burn_in_used = burn_in;
  if (c) r.epsilon = exp_moment_epsilon(*c);
  const auto init = measures::sample_gaussian(measures::GaussianLaw::standard(m.dim), cfg.n_particles, cfg.seed);
  const double eps_t = 1e-9 * cfg.dt;
  r.cloud = sim::simulate_frozen(m, mu, init, cfg, [&](double t, const RowMatrix& x) {
    if (t + eps_t < burn_in) return;
    const EmpiricalMeasure cloud(x);
    r.times.push_back(t);
    r.second_moment.push_back(cloud.second_moment());
    if (c) {
      const auto em = measures::exp_quadratic_moment(cloud, r.epsilon);
      r.exp_overflow = r.exp_overflow || em.overflow;
      r.exp_moment.push_back(em.estimate);
    }
  });
  r.second_moment_drift = relative_drift(r.times, r.second_moment);
  if (c && !r.exp_overflow) r.exp_moment_drift = relative_drift(r.times, r.exp_moment);
  if (r.exp_overflow) r.exp_moment_drift = std::numeric_limits<double>::infinity();
  r.stabilized = r.second_moment_drift <= 0.05;
  return r;
}

double mc_floor(const CoefficientModel& m, const EmpiricalMeasure& mu, const SimConfig& cfg, double burn_in,
                std::size_t cap) {
  SimConfig other = cfg;
  other.seed = cfg.seed ^ kFloorSalt;
  const auto a = phi(m, mu, cfg, burn_in).cloud;
  const auto b = phi(m, mu, other, burn_in).cloud;
  return w2_sub(a, b, cap);
}

FixedPointResult picard_fixed_point(const CoefficientModel& m, const EmpiricalMeasure& mu0, const SimConfig& cfg,
                                    double burn_in, double tol, std::size_t max_iter, std::optional<double> floor,
                                    std::size_t cap) {
  if (!(tol > 0)) throw InvalidArgument("picard: tol must be > 0");
  if (max_iter < 1) throw InvalidArgument("picard: max_iter must be >= 1");
  FixedPointResult r;
  r.floor = floor ? *floor : mc_floor(m, mu0, cfg, burn_in, cap);
  EmpiricalMeasure cur = mu0;
  for (std::size_t k = 0; k < max_iter; ++k) {
    EmpiricalMeasure next = phi(m, cur, cfg, burn_in).cloud;
    const double gap = w2_sub(next, cur, cap);
    r.gaps.push_back(gap);
    cur = std::move(next);
    if (gap <= tol) {
      r.converged = true;
      break;
    }
  }
  r.cloud = std::move(cur);
  return r;
}

ContractionEstimate contraction_estimate(const CoefficientModel& m, const EmpiricalMeasure& mu1,
                                         const EmpiricalMeasure& mu2, const SimConfig& cfg, double burn_in,
                                         std::size_t cap) {
  ContractionEstimate e;
  e.denominator = w2_sub(mu1, mu2, cap);
  e.floor = mc_floor(m, mu1, cfg, burn_in, cap);
  if (e.denominator < 10.0 * e.floor)
    throw InvalidArgument("contraction_estimate: W2(mu1, mu2) = " + std::to_string(e.denominator) +
                          " is below 10x the MC floor " + std::to_string(e.floor));
  e.numerator = w2_sub(phi(m, mu1, cfg, burn_in).cloud, phi(m, mu2, cfg, burn_in).cloud, cap);
  e.ratio = e.numerator / e.denominator;
  return e;
}

}  // namespace mvlab::inv
