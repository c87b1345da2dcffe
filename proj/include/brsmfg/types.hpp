#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>

namespace brsmfg {

/// Largest state dimension a model may use. Points are stack allocated.
inline constexpr int kMaxDim = 4;

/// Largest number of interacting populations.
inline constexpr std::size_t kMaxPopulations = 4;

using Scalar = double;

/// A point (or vector) in R^d with d <= kMaxDim, no heap allocation.
using Point = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/// N x d particle positions, one particle per row.
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = Eigen::VectorXd;

/// The one random engine used throughout; seeded explicitly everywhere.
using Rng = std::mt19937_64;

enum class ErrorKind {
  config,     ///< bad input or parameters
  numerical,  ///< CFL violation, blow-up, non-finite values
  domain,     ///< precondition of an operation not met
};

/// Single exception type for the library; the kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline Point make_point(std::initializer_list<Scalar> xs) {
  Point p(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (Scalar x : xs) p[k++] = x;
  return p;
}

inline Point zero_point(int d) { return Point::Zero(d); }

}  // namespace brsmfg
