#pragma once

#include "rece/types.hpp"

#include <string>
#include <variant>

namespace rece {

/// Factorization of a symmetric positive semi-definite system matrix.
///
/// Cholesky is tried first. If it fails, or its pivots imply the matrix is
/// numerically singular, a fully pivoted LU is used to measure the rank; a
/// rank defect raises SingularMatrixError rather than falling back to a
/// pseudo-inverse.
class SymmetricSolver {
 public:
  /// `name` appears in error messages ("denominator D", ...).
  SymmetricSolver(const Matrix& system, std::string name, double rank_tol = 1e-12);

  /// Solves system * X = rhs.
  Matrix solve(const Matrix& rhs) const;

  Eigen::Index dim() const noexcept { return dim_; }
  bool used_cholesky() const noexcept { return std::holds_alternative<Eigen::LLT<Matrix>>(factor_); }

  /// Squared ratio of the largest to smallest Cholesky pivot; an estimate of
  /// the 2-norm condition number. Infinity when the LU fallback was used.
  double condition_estimate() const noexcept { return condition_; }

  /// Set when the condition estimate exceeds kIllConditioned.
  bool ill_conditioned() const noexcept { return condition_ > kIllConditioned; }

  static constexpr double kIllConditioned = 1e12;

 private:
  Eigen::Index dim_;
  std::variant<Eigen::LLT<Matrix>, Eigen::FullPivLU<Matrix>> factor_;
  double condition_;
};

}  // namespace rece
