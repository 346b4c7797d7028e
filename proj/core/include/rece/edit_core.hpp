#pragma once

#include "rece/linalg.hpp"
#include "rece/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rece {

/// Keys or values for every token of `c`: W * c, one column per token.
Matrix project_kv(const ProjectionMatrix& w, const Embedding& c);

/// The closed-form edit objective evaluated at candidate weights `w`:
///
///   sum_i |w c_i - w_old c_i*|^2 + lambda1 sum_j |w c_j - w_old c_j|^2
///     + lambda2 |w - w_old|_F^2
///
/// Multi-token embeddings contribute one term per column.
double uce_objective(const Matrix& w, const Matrix& w_old, std::span<const ConceptTask> erase,
                     std::span<const Embedding> preserve, double lambda1, double lambda2);

/// Precomputed closed-form edit shared by every matrix in a layer set.
///
/// The minimizer is W = W_old N D^-1 with
///   N = sum c* c^T + lambda1 sum c_j c_j^T + lambda2 I
///   D = sum c  c^T + lambda1 sum c_j c_j^T + lambda2 I.
/// Since N - D = (C* - C) C^T, this is applied as the low-rank update
///   W = W_old + (W_old (C* - C)) (D^-1 C)^T
/// which needs one factorization of D and no explicit inverse. An erase set
/// whose columns satisfy c* == c, or whose sources are zero, yields an exactly
/// zero update.
class UceEdit {
 public:
  UceEdit(std::span<const ConceptTask> erase, std::span<const Embedding> preserve,
          double lambda1, double lambda2, Eigen::Index embed_dim, double rank_tol = 1e-12);

  /// Applies the edit to one matrix; the result keeps name, kind and origin.
  ProjectionMatrix apply(const ProjectionMatrix& w_old) const;

  /// True when the update vanishes identically; apply() then returns a copy.
  bool is_identity() const noexcept { return identity_; }

  Eigen::Index embed_dim() const noexcept { return dim_; }

  /// Denominator matrix D (formed for diagnostics and bound checks).
  const Matrix& denominator() const noexcept { return denominator_; }

  /// Numerator N = D + (C* - C) C^T.
  Matrix numerator() const;

  /// Empty unless D was factored (identity edits skip the solve).
  const std::optional<SymmetricSolver>& solver() const noexcept { return solver_; }

  /// Conditioning notes to surface in reports.
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  Eigen::Index dim_;
  Matrix sources_;       // C,  d x k
  Matrix shift_;         // C* - C, d x k
  Matrix solved_;        // D^-1 C, d x k
  Matrix denominator_;   // D
  std::optional<SymmetricSolver> solver_;
  bool identity_ = true;
  std::vector<std::string> warnings_;
};

ProjectionMatrix uce_edit(const ProjectionMatrix& w_old, std::span<const ConceptTask> erase,
                          std::span<const Embedding> preserve, double lambda1, double lambda2);

/// Edits every matrix of the set with one shared factorization. Layer order,
/// names and origins are kept; an identity edit returns an equal set.
AttentionLayerSet edit_layer_set(const AttentionLayerSet& layers,
                                 std::span<const ConceptTask> erase,
                                 std::span<const Embedding> preserve, double lambda1,
                                 double lambda2, std::vector<std::string>* warnings = nullptr);

/// Squared output shift |W_a d - W_b d|^2 of a probe embedding, summed over tokens.
double drift(const ProjectionMatrix& w_a, const ProjectionMatrix& w_b, const Embedding& probe);

/// drift() summed over every aligned layer pair.
double drift(const AttentionLayerSet& a, const AttentionLayerSet& b, const Embedding& probe);

}  // namespace rece
