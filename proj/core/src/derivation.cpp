#include "rece/derivation.hpp"

#include "rece/error.hpp"

#include <sstream>

namespace rece {
namespace {

void check(const Matrix& c_prime, const Embedding& c, const AttentionLayerSet& new_set,
           const AttentionLayerSet& old_set) {
  require_aligned(new_set, old_set);
  if (c.dim() != new_set.embed_dim()) {
    throw DimensionError("concept '" + c.label() + "' has dim " + std::to_string(c.dim()) +
                         ", layers expect " + std::to_string(new_set.embed_dim()));
  }
  if (c_prime.rows() != c.dim() || c_prime.cols() != c.tokens()) {
    throw DimensionError("candidate embedding is " + std::to_string(c_prime.rows()) + "x" +
                         std::to_string(c_prime.cols()) + ", concept is " +
                         std::to_string(c.dim()) + "x" + std::to_string(c.tokens()));
  }
}

Matrix gram(const AttentionLayerSet& set, double lambda) {
  const Eigen::Index d = set.embed_dim();
  Matrix a = Matrix::Identity(d, d) * lambda;
  for (const auto& layer : set) {
    a.selfadjointView<Eigen::Lower>().rankUpdate(layer.weights().transpose());
  }
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  return a;
}

}  // namespace

double DerivationResult::residual() const {
  double total = 0.0;
  for (const auto& [name, r] : residual_per_layer) total += r;
  return total;
}

double derivation_objective(const Matrix& c_prime, const Embedding& c,
                            const AttentionLayerSet& new_set, const AttentionLayerSet& old_set,
                            double lambda) {
  check(c_prime, c, new_set, old_set);
  double total = lambda * c_prime.squaredNorm();
  for (std::size_t i = 0; i < new_set.size(); ++i) {
    total += (new_set[i].weights() * c_prime - old_set[i].weights() * c.data()).squaredNorm();
  }
  return total;
}

Matrix derivation_gradient(const Matrix& c_prime, const Embedding& c,
                           const AttentionLayerSet& new_set, const AttentionLayerSet& old_set,
                           double lambda) {
  check(c_prime, c, new_set, old_set);
  Matrix g = 2.0 * lambda * c_prime;
  for (std::size_t i = 0; i < new_set.size(); ++i) {
    const Matrix r = new_set[i].weights() * c_prime - old_set[i].weights() * c.data();
    g.noalias() += 2.0 * new_set[i].weights().transpose() * r;
  }
  return g;
}

EmbeddingDeriver::EmbeddingDeriver(const AttentionLayerSet& new_set,
                                   const AttentionLayerSet& old_set, double lambda,
                                   double rank_tol)
    : new_set_(&new_set),
      old_set_(&old_set),
      lambda_(lambda),
      solver_([&] {
        if (lambda < 0.0) throw DimensionError("lambda must be >= 0");
        require_aligned(new_set, old_set);
        return SymmetricSolver(gram(new_set, lambda), "regularized Gram matrix A", rank_tol);
      }()) {}

Matrix EmbeddingDeriver::rhs(const Embedding& c) const {
  if (c.dim() != new_set_->embed_dim()) {
    throw DimensionError("concept '" + c.label() + "' has dim " + std::to_string(c.dim()) +
                         ", layers expect " + std::to_string(new_set_->embed_dim()));
  }
  Matrix b = Matrix::Zero(c.dim(), c.tokens());
  for (std::size_t i = 0; i < new_set_->size(); ++i) {
    const Matrix projected = (*old_set_)[i].weights() * c.data();
    b.noalias() += (*new_set_)[i].weights().transpose() * projected;
  }
  return b;
}

DerivationResult EmbeddingDeriver::derive(const Embedding& c) const {
  Embedding c_prime(solver_.solve(rhs(c)), c.label());

  DerivationResult result{.c_prime = std::move(c_prime)};
  result.lambda_used = lambda_;
  result.unregularized = lambda_ == 0.0;
  result.norm = result.c_prime.column_norms();
  result.residual_per_layer.reserve(new_set_->size());
  double total = lambda_ * result.c_prime.data().squaredNorm();
  for (std::size_t i = 0; i < new_set_->size(); ++i) {
    const double r = ((*new_set_)[i].weights() * result.c_prime.data() -
                      (*old_set_)[i].weights() * c.data())
                         .squaredNorm();
    result.residual_per_layer.emplace_back((*new_set_)[i].name(), r);
    total += r;
  }
  result.objective_value = total;
  if (result.unregularized) result.warnings.emplace_back("lambda = 0: unregularized derivation");
  if (solver_.ill_conditioned()) {
    std::ostringstream os;
    os << "Gram matrix A is ill-conditioned (condition estimate " << solver_.condition_estimate()
       << ")";
    result.warnings.push_back(os.str());
  }
  return result;
}

DerivationResult derive_embedding(const Embedding& c, const AttentionLayerSet& new_set,
                                  const AttentionLayerSet& old_set, double lambda) {
  return EmbeddingDeriver(new_set, old_set, lambda).derive(c);
}

}  // namespace rece
