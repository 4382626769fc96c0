#include "mvlab/measures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mvlab/assignment.hpp"
#include "mvlab/csv.hpp"
#include "mvlab/rng.hpp"

namespace mvlab::measures {

EmpiricalMeasure::EmpiricalMeasure(RowMatrix points) : points_(std::move(points)) {
  if (points_.rows() < 1) throw InvalidArgument("empirical measure needs at least one particle");
  if (points_.cols() < 1) throw InvalidArgument("empirical measure needs dimension >= 1");
  if (!points_.allFinite()) throw InvalidArgument("empirical measure has non-finite entries");
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Vector& x, std::size_t n) {
  if (n == 0) throw InvalidArgument("dirac cloud needs n >= 1");
  RowMatrix p(static_cast<Eigen::Index>(n), x.size());
  p.rowwise() = x.transpose();
  return EmpiricalMeasure(std::move(p));
}

Vector EmpiricalMeasure::mean() const {
  const int d = dim();
  std::vector<long double> acc(d, 0.0L);
  for (Eigen::Index i = 0; i < points_.rows(); ++i)
    for (int k = 0; k < d; ++k) acc[k] += points_(i, k);
  Vector m(d);
  for (int k = 0; k < d; ++k) m(k) = static_cast<double>(acc[k] / points_.rows());
  return m;
}

double EmpiricalMeasure::second_moment() const {
  long double acc = 0.0L;
  for (Eigen::Index i = 0; i < points_.rows(); ++i) acc += points_.row(i).squaredNorm();
  return static_cast<double>(acc / points_.rows());
}

EmpiricalMeasure EmpiricalMeasure::subsample(std::size_t cap, std::uint64_t seed) const {
  if (cap == 0) throw InvalidArgument("subsample cap must be >= 1");
  if (size() <= cap) return *this;
  auto idx = rng::sample_without_replacement(size(), cap, seed);
  std::sort(idx.begin(), idx.end());
  RowMatrix p(static_cast<Eigen::Index>(cap), points_.cols());
  for (std::size_t i = 0; i < cap; ++i) p.row(static_cast<Eigen::Index>(i)) = points_.row(static_cast<Eigen::Index>(idx[i]));
  return EmpiricalMeasure(std::move(p));
}

GaussianLaw::GaussianLaw(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw DimensionError("gaussian law: covariance must be square and match the mean");
  if (mean.size() < 1) throw DimensionError("gaussian law: dimension must be >= 1");
  if (!mean.allFinite() || !cov.allFinite()) throw InvalidArgument("gaussian law: non-finite entries");
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
    throw InvalidArgument("gaussian law: covariance is not symmetric");
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10) throw InvalidArgument("gaussian law: covariance is not PSD");
}

GaussianLaw GaussianLaw::standard(int d) { return GaussianLaw(Vector::Zero(d), Matrix::Identity(d, d)); }

double clamped_sqrt(double squared, double scale) {
  if (squared >= 0.0) return std::sqrt(squared);
  if (squared >= -1e-14 * std::max(1.0, scale)) return 0.0;
  throw Error("negative squared distance " + csv::format_double(squared));
}

double w2_sorted_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) throw DimensionError("w2: clouds must have equal size");
  if (a.empty()) throw InvalidArgument("w2: empty cloud");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double diff = static_cast<long double>(a[i]) - b[i];
    acc += diff * diff;
  }
  return std::sqrt(static_cast<double>(acc / a.size()));
}

static void check_pair(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.size() != nu.size())
    throw DimensionError("w2: clouds must have equal size (" + std::to_string(mu.size()) + " vs " +
                         std::to_string(nu.size()) + ")");
  if (mu.dim() != nu.dim()) throw DimensionError("w2: clouds must have equal dimension");
}

static std::vector<double> column(const EmpiricalMeasure& mu, int k) {
  std::vector<double> v(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) v[i] = mu.points()(static_cast<Eigen::Index>(i), k);
  return v;
}

double w2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t cap) {
  check_pair(mu, nu);
  const std::size_t n = mu.size();
  if (n > cap)
    throw InvalidArgument("w2_exact: cloud size " + std::to_string(n) + " exceeds the exact cap " +
                          std::to_string(cap) + "; subsample or use w2_sliced");
  if (mu.dim() == 1) return w2_sorted_1d(column(mu, 0), column(nu, 0));

  const auto& p = mu.points();
  const auto& q = nu.points();
  const int d = mu.dim();
  const auto ni = static_cast<Eigen::Index>(n);
  CostMatrix cost(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index j = 0; j < ni; ++j) {
      long double c = 0.0L;
      for (int k = 0; k < d; ++k) {
        const long double diff = static_cast<long double>(p(i, k)) - q(j, k);
        c += diff * diff;
      }
      cost(i, j) = c;
    }
  }
  const Assignment a = solve_assignment(cost);
  return clamped_sqrt(static_cast<double>(a.total_cost / n));
}

double w2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t n_dirs,
                 std::uint64_t seed) {
  check_pair(mu, nu);
  if (n_dirs == 0) throw InvalidArgument("w2_sliced: n_dirs must be >= 1");
  const int d = mu.dim();
  rng::Engine eng(seed, rng::Stream::directions);
  Vector dir(d);
  std::vector<double> a(mu.size()), b(nu.size());
  long double acc = 0.0L;
  for (std::size_t s = 0; s < n_dirs; ++s) {
    double norm = 0.0;
    do {
      for (int k = 0; k < d; ++k) dir(k) = eng.normal();
      norm = dir.norm();
    } while (norm == 0.0);
    if (d == 1)
      dir(0) = dir(0) > 0 ? 1.0 : -1.0;
    else
      dir /= norm;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = mu.points().row(static_cast<Eigen::Index>(i)).dot(dir.transpose());
      b[i] = nu.points().row(static_cast<Eigen::Index>(i)).dot(dir.transpose());
    }
    const double w = w2_sorted_1d(a, b);
    acc += static_cast<long double>(w) * w;
  }
  return std::sqrt(static_cast<double>(acc / n_dirs));
}

Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

static void check_same_dim(const GaussianLaw& a, const GaussianLaw& b) {
  if (a.dim() != b.dim() || a.dim() == 0) throw DimensionError("gaussian laws must share a dimension");
}

double gaussian_w2(const GaussianLaw& a, const GaussianLaw& b) {
  check_same_dim(a, b);
  const double dm2 = (a.mean - b.mean).squaredNorm();
  if (a.cov == b.cov) return std::sqrt(dm2);
  if (a.dim() == 1) {
    const double ds = std::sqrt(std::max(0.0, a.cov(0, 0))) - std::sqrt(std::max(0.0, b.cov(0, 0)));
    return std::sqrt(dm2 + ds * ds);
  }
  const Matrix sb = psd_sqrt(b.cov);
  const Matrix inner = sb * a.cov * sb;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double ta = a.cov.trace(), tb = b.cov.trace();
  const double sq = dm2 + ta + tb - 2.0 * cross;
  return clamped_sqrt(sq, dm2 + ta + tb);
}

double gaussian_kl(const GaussianLaw& a, const GaussianLaw& b) {
  check_same_dim(a, b);
  Eigen::SelfAdjointEigenSolver<Matrix> eb(b.cov, Eigen::EigenvaluesOnly);
  const double bmax = eb.eigenvalues().maxCoeff();
  if (eb.eigenvalues().minCoeff() <= 1e-14 * std::max(1.0, bmax))
    throw InfiniteEntropy("relative entropy: reference covariance is singular");
  Eigen::SelfAdjointEigenSolver<Matrix> ea(a.cov, Eigen::EigenvaluesOnly);
  if (ea.eigenvalues().minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();

  // Eigenvalues of Σ_b⁻¹Σ_a; sum of (λ−1−log λ) is accurate near λ=1.
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> g(a.cov, b.cov, Eigen::EigenvaluesOnly);
  long double shape = 0.0L;
  for (Eigen::Index i = 0; i < g.eigenvalues().size(); ++i) {
    const double u = g.eigenvalues()(i) - 1.0;
    if (u <= -1.0) return std::numeric_limits<double>::infinity();
    shape += u - std::log1p(u);
  }
  const Vector dm = b.mean - a.mean;
  const double quad = dm.dot(b.cov.llt().solve(dm));
  const double kl = 0.5 * (static_cast<double>(shape) + quad);
  return std::max(0.0, kl);
}

GaussianLaw moment_match(const EmpiricalMeasure& mu) {
  if (mu.size() < 2) throw InvalidArgument("moment_match needs at least two particles");
  const int d = mu.dim();
  const Vector m = mu.mean();
  Matrix c(d, d);
  const auto& p = mu.points();
  for (int k = 0; k < d; ++k) {
    for (int l = k; l < d; ++l) {
      long double acc = 0.0L;
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        acc += (static_cast<long double>(p(i, k)) - m(k)) * (static_cast<long double>(p(i, l)) - m(l));
      c(k, l) = c(l, k) = static_cast<double>(acc / p.rows());
    }
  }
  return GaussianLaw(m, c);
}

ExpMomentReport exp_quadratic_moment(const EmpiricalMeasure& mu, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw InvalidArgument("exp_quadratic_moment: epsilon must be positive");
  ExpMomentReport r;
  r.epsilon = epsilon;
  r.trace.reserve(mu.size());
  long double acc = 0.0L;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double e = epsilon * mu.particle(i).squaredNorm();
    if (r.overflow || e > 709.0) {
      r.overflow = true;
      r.trace.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    acc += std::exp(static_cast<long double>(e));
    r.trace.push_back(static_cast<double>(acc / (i + 1)));
  }
  r.estimate = r.trace.back();
  return r;
}

EmpiricalMeasure sample_gaussian(const GaussianLaw& law, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_gaussian: n must be >= 1");
  const int d = law.dim();
  const Matrix root = psd_sqrt(law.cov);
  rng::CounterStream stream(seed, rng::Stream::init);
  RowMatrix p(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (std::size_t i = 0; i < n; ++i) {
    stream.normals(i, 0, std::span<double>(z.data(), static_cast<std::size_t>(d)));
    p.row(static_cast<Eigen::Index>(i)) = (law.mean + root * z).transpose();
  }
  return EmpiricalMeasure(std::move(p));
}

std::string to_csv(const EmpiricalMeasure& mu) {
  std::ostringstream os;
  csv::Writer w(os);
  std::vector<std::string> head;
  for (int k = 0; k < mu.dim(); ++k) head.push_back("x" + std::to_string(k + 1));
  w.header(head);
  std::vector<double> row(mu.dim());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (int k = 0; k < mu.dim(); ++k) row[k] = mu.points()(static_cast<Eigen::Index>(i), k);
    w.row(row);
  }
  return os.str();
}

EmpiricalMeasure from_csv(std::string_view text) {
  const csv::Table t = csv::parse(text);
  if (t.header.empty()) throw IoError("cloud csv: missing header row");
  const auto d = static_cast<Eigen::Index>(t.header.size());
  for (Eigen::Index k = 0; k < d; ++k)
    if (t.header[k] != "x" + std::to_string(k + 1))
      throw IoError("cloud csv: header column " + std::to_string(k + 1) + " must be 'x" +
                    std::to_string(k + 1) + "'");
  if (t.rows.empty()) throw IoError("cloud csv: no particles");
  RowMatrix p(static_cast<Eigen::Index>(t.rows.size()), d);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (static_cast<Eigen::Index>(t.rows[i].size()) != d)
      throw IoError("cloud csv: row " + std::to_string(i + 2) + " has the wrong number of fields");
    for (Eigen::Index k = 0; k < d; ++k) p(static_cast<Eigen::Index>(i), k) = csv::parse_double(t.rows[i][k]);
  }
  return EmpiricalMeasure(std::move(p));
}

void write_csv(const std::filesystem::path& path, const EmpiricalMeasure& mu) {
  csv::write_file(path, to_csv(mu));
}

EmpiricalMeasure read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

}  // namespace mvlab::measures
