#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvlab/types.hpp"

namespace mvlab::measures {

/// Equal-weight particle cloud; row i is particle i.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(RowMatrix points);

  /// N copies of the point x.
  static EmpiricalMeasure dirac(const Vector& x, std::size_t n);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  const RowMatrix& points() const { return points_; }
  RowMatrix& mutable_points() { return points_; }
  auto particle(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)); }

  Vector mean() const;
  /// ‖μ‖₂² = mean of |x|².
  double second_moment() const;

  /// Seeded subsample without replacement down to `cap` particles (identity if size <= cap).
  EmpiricalMeasure subsample(std::size_t cap, std::uint64_t seed) const;

 private:
  RowMatrix points_;
};

struct GaussianLaw {
  Vector mean;
  Matrix cov;

  GaussianLaw() = default;
  /// Validates symmetry (1e-12) and positive semidefiniteness (eigenvalues >= -1e-10).
  GaussianLaw(Vector m, Matrix c);
  int dim() const { return static_cast<int>(mean.size()); }
  static GaussianLaw standard(int d);
};

struct ExpMomentReport {
  double epsilon = 0.0;
  double estimate = 1.0;
  bool overflow = false;
  std::vector<double> trace;  ///< running average after each particle
};

inline constexpr std::size_t kExactCap = 512;

/// Exact W₂ between equal-size clouds via the assignment problem.
double w2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t cap = kExactCap);

/// Exact W₂ in one dimension by sorted matching; no size cap.
double w2_sorted_1d(std::vector<double> a, std::vector<double> b);

/// Root mean square over random unit directions of the 1D W₂ of the
/// projected clouds. A cheap proxy that never exceeds the exact W₂.
double w2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t n_dirs,
                 std::uint64_t seed);

/// Bures-Wasserstein distance between Gaussians.
double gaussian_w2(const GaussianLaw& a, const GaussianLaw& b);

/// Thrown when the reference law of a relative entropy is degenerate.
class InfiniteEntropy : public Error {
 public:
  using Error::Error;
};

/// KL(a | b) in closed form. +inf when a is singular and b is not.
double gaussian_kl(const GaussianLaw& a, const GaussianLaw& b);

/// Sample mean and covariance (denominator N).
GaussianLaw moment_match(const EmpiricalMeasure& mu);

ExpMomentReport exp_quadratic_moment(const EmpiricalMeasure& mu, double epsilon);

EmpiricalMeasure sample_gaussian(const GaussianLaw& law, std::size_t n, std::uint64_t seed);

/// Symmetric PSD square root through an eigendecomposition (negative eigenvalues clamped).
Matrix psd_sqrt(const Matrix& m);

/// Clamps tiny negative squared distances and returns the root.
double clamped_sqrt(double squared, double scale = 1.0);

std::string to_csv(const EmpiricalMeasure& mu);
EmpiricalMeasure from_csv(std::string_view text);
void write_csv(const std::filesystem::path& path, const EmpiricalMeasure& mu);
EmpiricalMeasure read_csv(const std::filesystem::path& path);

}  // namespace mvlab::measures
