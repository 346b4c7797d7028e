#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace rece {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A concept phrase in text-encoder space: d rows, one column per token
/// (a single column for pooled vectors).
class Embedding {
 public:
  Embedding(Matrix data, std::string label = {});

  /// Zero embedding of the given shape.
  static Embedding zeros(Eigen::Index dim, Eigen::Index tokens = 1, std::string label = {});

  const Matrix& data() const noexcept { return data_; }
  const std::string& label() const noexcept { return label_; }
  Eigen::Index dim() const noexcept { return data_.rows(); }
  Eigen::Index tokens() const noexcept { return data_.cols(); }

  /// Euclidean norm of each column.
  std::vector<double> column_norms() const;

 private:
  Matrix data_;
  std::string label_;
};

enum class ProjKind { Key, Value };

const char* to_string(ProjKind kind);

/// Where a projection matrix came from inside a tensor file, so that an
/// edited copy can be written back in its on-disk layout.
struct TensorOrigin {
  std::string dtype;        // on-disk dtype string, e.g. "F32"
  bool transposed = false;  // stored as (d x out) rather than (out x d)
};

/// One cross-attention key or value projection, W of shape out x d.
class ProjectionMatrix {
 public:
  ProjectionMatrix(std::string name, ProjKind kind, Matrix weights,
                   std::optional<TensorOrigin> origin = std::nullopt);

  const std::string& name() const noexcept { return name_; }
  ProjKind kind() const noexcept { return kind_; }
  const Matrix& weights() const noexcept { return weights_; }
  const std::optional<TensorOrigin>& origin() const noexcept { return origin_; }
  Eigen::Index out_dim() const noexcept { return weights_.rows(); }
  Eigen::Index embed_dim() const noexcept { return weights_.cols(); }

  /// Same name, kind and origin with different weights (shape must match).
  ProjectionMatrix with_weights(Matrix weights) const;

  friend bool operator==(const ProjectionMatrix& a, const ProjectionMatrix& b);

 private:
  std::string name_;
  ProjKind kind_;
  Matrix weights_;
  std::optional<TensorOrigin> origin_;
};

/// Ordered K/V projections that all consume embeddings of the same dimension.
class AttentionLayerSet {
 public:
  explicit AttentionLayerSet(std::vector<ProjectionMatrix> layers);

  const std::vector<ProjectionMatrix>& layers() const noexcept { return layers_; }
  Eigen::Index embed_dim() const noexcept { return embed_dim_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const ProjectionMatrix& operator[](std::size_t i) const { return layers_[i]; }

  auto begin() const noexcept { return layers_.begin(); }
  auto end() const noexcept { return layers_.end(); }

  /// Total number of scalar weights across all layers.
  std::size_t parameter_count() const;

  /// Exact (bitwise for finite values) equality of names, kinds and weights.
  friend bool operator==(const AttentionLayerSet& a, const AttentionLayerSet& b);

 private:
  std::vector<ProjectionMatrix> layers_;
  Eigen::Index embed_dim_;
};

/// Throws AlignmentError naming the first entry where the two sets differ in
/// name, kind or shape.
void require_aligned(const AttentionLayerSet& a, const AttentionLayerSet& b);

/// One erasure target: outputs for `source` are steered toward the outputs
/// the original weights produce for `destination`.
struct ConceptTask {
  Embedding source;
  Embedding destination;
  std::string label;
};

/// Destination columns paired with `source`: either the same token count,
/// or a single column broadcast across all source tokens.
Matrix paired_destination(const Embedding& source, const Embedding& destination);

struct EditConfig {
  double lambda1 = 0.1;     // preserve-set weight
  double lambda2 = 0.1;     // pull toward the pre-edit weights
  double lambda_reg = 0.1;  // ridge penalty on derived embeddings
  int epochs = 5;
  double solve_tol = 1e-12;  // relative rank threshold for the pivoted fallback
  double oracle_tol = 1e-6;  // gap accepted by the brute-force certifier

  static EditConfig unsafe_preset();
  static EditConfig artistic_preset();
  static EditConfig object_preset();

  /// Throws DimensionError on a negative lambda or non-positive tolerance.
  void validate() const;
};

}  // namespace rece
