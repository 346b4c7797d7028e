#pragma once

#include "rece/linalg.hpp"
#include "rece/types.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rece {

/// An embedding that makes the edited layers reproduce what the original
/// layers produced for a given concept.
struct DerivationResult {
  Embedding c_prime;
  double objective_value = 0.0;
  /// |W_i^new c' - W_i^old c|^2 per layer, summed over tokens.
  std::vector<std::pair<std::string, double>> residual_per_layer;
  /// |c'|_2 per token column.
  std::vector<double> norm;
  double lambda_used = 0.0;
  /// lambda == 0: the unregularized solution, which needs the stacked edited
  /// matrices to have full column rank.
  bool unregularized = false;
  std::vector<std::string> warnings;

  /// Sum of residual_per_layer.
  double residual() const;
};

/// sum_i |W_i^new c' - W_i^old c|^2 + lambda |c'|^2, per column, summed.
double derivation_objective(const Matrix& c_prime, const Embedding& c,
                            const AttentionLayerSet& new_set, const AttentionLayerSet& old_set,
                            double lambda);

/// 2 sum_i W_i^new^T (W_i^new c' - W_i^old c) + 2 lambda c'.
Matrix derivation_gradient(const Matrix& c_prime, const Embedding& c,
                           const AttentionLayerSet& new_set, const AttentionLayerSet& old_set,
                           double lambda);

/// Factors A = lambda I + sum_i W_i^new^T W_i^new once so that several
/// concepts can be derived against the same pair of layer sets.
///
/// The right-hand side sum_i W_i^new^T W_i^old c is accumulated as matrix
/// products with c, in layer order, rather than by forming the d x d
/// cross-Gram matrix.
class EmbeddingDeriver {
 public:
  EmbeddingDeriver(const AttentionLayerSet& new_set, const AttentionLayerSet& old_set,
                   double lambda, double rank_tol = 1e-12);

  DerivationResult derive(const Embedding& c) const;

  /// sum_i W_i^new^T W_i^old c.
  Matrix rhs(const Embedding& c) const;

  const SymmetricSolver& solver() const noexcept { return solver_; }

 private:
  const AttentionLayerSet* new_set_;
  const AttentionLayerSet* old_set_;
  double lambda_;
  SymmetricSolver solver_;
};

DerivationResult derive_embedding(const Embedding& c, const AttentionLayerSet& new_set,
                                  const AttentionLayerSet& old_set, double lambda);

}  // namespace rece
