#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mdfa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Denominator used for covariance-type averages: n or n-1.
enum class Denominator { N, NMinus1 };

inline double denom_value(Denominator d, Index n) {
  return d == Denominator::N ? static_cast<double>(n) : static_cast<double>(n - 1);
}

/// Central numeric tolerances. Defaults are used everywhere unless a caller
/// overrides a specific field.
struct Tolerances {
  double orthonormal = 1e-10;   // max |Q^T Q - I| for orthonormality checks
  double reconstruct = 1e-8;    // max |A - A_rebuilt| for factorization checks
  double psd = 1e-6;            // allowed magnitude of negative eigenvalues
  double eig_clamp_rel = 1e-10; // relative cutoff for treating eigenvalues as zero
  double score_feas = 1e-8;     // constraint-violation bound for fitted scores
  double upper_zero = 1e-10;    // |lambda_ij| bound for the zero upper triangle
  double mgs_accept = 1e-7;     // residual-norm acceptance in orthocomplement builds
};

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

class NotPsd : public Error {
 public:
  explicit NotPsd(const std::string& msg) : Error(msg) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

class TooFewRows : public Error {
 public:
  explicit TooFewRows(const std::string& msg) : Error(msg) {}
};

/// A fitted loading matrix violates the positivity/triangular identification
/// conditions beyond tolerance.
class NotIdentified : public Error {
 public:
  explicit NotIdentified(const std::string& msg) : Error(msg) {}
};

/// A requested truth/design does not satisfy the identifiability conditions.
class NotIdentifiable : public Error {
 public:
  explicit NotIdentifiable(const std::string& msg) : Error(msg) {}
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(const std::string& msg) : Error(msg) {}
};

class SingularHessian : public Error {
 public:
  explicit SingularHessian(const std::string& msg) : Error(msg) {}
};

/// Loss evaluation failed (non-finite value or invalid point).
class EvalError : public Error {
 public:
  explicit EvalError(const std::string& msg) : Error(msg) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

class InvalidSpec : public Error {
 public:
  explicit InvalidSpec(const std::string& msg) : Error(msg) {}
};

}  // namespace mdfa
