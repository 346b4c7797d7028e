#include "rece/linalg.hpp"

#include "rece/error.hpp"

#include <cmath>
#include <limits>

namespace rece {

SymmetricSolver::SymmetricSolver(const Matrix& system, std::string name, double rank_tol)
    : dim_(system.rows()), factor_(Eigen::LLT<Matrix>()), condition_(1.0) {
  if (system.rows() != system.cols()) {
    throw DimensionError(name + " must be square, got " + std::to_string(system.rows()) + "x" +
                         std::to_string(system.cols()));
  }
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() == Eigen::Success) {
    const auto diag = llt.matrixLLT().diagonal();
    const double ratio = diag.maxCoeff() / diag.minCoeff();
    condition_ = ratio * ratio;
    // Beyond ~1/eps the pivots no longer certify full rank.
    if (condition_ < 1.0 / std::numeric_limits<double>::epsilon()) {
      factor_ = std::move(llt);
      return;
    }
  }

  Eigen::FullPivLU<Matrix> lu(system);
  lu.setThreshold(rank_tol);
  if (lu.rank() < dim_) throw SingularMatrixError(name, lu.rank(), dim_);
  condition_ = std::numeric_limits<double>::infinity();
  factor_ = std::move(lu);
}

Matrix SymmetricSolver::solve(const Matrix& rhs) const {
  if (rhs.rows() != dim_) {
    throw DimensionError("right-hand side has " + std::to_string(rhs.rows()) +
                         " rows, system has dim " + std::to_string(dim_));
  }
  return std::visit([&](const auto& f) -> Matrix { return f.solve(rhs); }, factor_);
}

}  // namespace rece
