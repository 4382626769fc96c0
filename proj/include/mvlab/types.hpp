#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mvlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecRef = Eigen::Ref<Vector>;
using ConstVecRef = Eigen::Ref<const Vector>;

/// Space/time drift with the measure argument already bound: out = b_t(x).
using DriftFn = std::function<void(double t, ConstVecRef x, VecRef out)>;

// Error hierarchy. Everything thrown by the library derives from Error so the
// CLI can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A coefficient returned a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// The particle state became non-finite during time stepping.
class ExplosionError : public Error {
 public:
  ExplosionError(const std::string& what, std::uint64_t step) : Error(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvlab
