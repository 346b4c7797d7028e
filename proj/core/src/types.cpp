#include "rece/types.hpp"

#include "rece/error.hpp"

#include <set>

namespace rece {
namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Embedding::Embedding(Matrix data, std::string label)
    : data_(std::move(data)), label_(std::move(label)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw DimensionError("embedding '" + label_ + "' has empty shape " + shape_str(data_));
  }
  if (!data_.allFinite()) {
    throw DimensionError("embedding '" + label_ + "' contains non-finite entries");
  }
}

Embedding Embedding::zeros(Eigen::Index dim, Eigen::Index tokens, std::string label) {
  return Embedding(Matrix::Zero(dim, tokens), std::move(label));
}

std::vector<double> Embedding::column_norms() const {
  std::vector<double> norms;
  norms.reserve(static_cast<std::size_t>(data_.cols()));
  for (Eigen::Index j = 0; j < data_.cols(); ++j) norms.push_back(data_.col(j).norm());
  return norms;
}

const char* to_string(ProjKind kind) { return kind == ProjKind::Key ? "K" : "V"; }

ProjectionMatrix::ProjectionMatrix(std::string name, ProjKind kind, Matrix weights,
                                   std::optional<TensorOrigin> origin)
    : name_(std::move(name)), kind_(kind), weights_(std::move(weights)), origin_(std::move(origin)) {
  if (weights_.rows() < 1 || weights_.cols() < 1) {
    throw DimensionError("projection '" + name_ + "' has empty shape " + shape_str(weights_));
  }
  if (!weights_.allFinite()) {
    throw DimensionError("projection '" + name_ + "' contains non-finite entries");
  }
}

ProjectionMatrix ProjectionMatrix::with_weights(Matrix weights) const {
  if (weights.rows() != weights_.rows() || weights.cols() != weights_.cols()) {
    throw DimensionError("replacement weights for '" + name_ + "' are " + shape_str(weights) +
                         ", expected " + shape_str(weights_));
  }
  return ProjectionMatrix(name_, kind_, std::move(weights), origin_);
}

bool operator==(const ProjectionMatrix& a, const ProjectionMatrix& b) {
  return a.name_ == b.name_ && a.kind_ == b.kind_ && a.weights_.rows() == b.weights_.rows() &&
         a.weights_.cols() == b.weights_.cols() && a.weights_ == b.weights_;
}

AttentionLayerSet::AttentionLayerSet(std::vector<ProjectionMatrix> layers)
    : layers_(std::move(layers)), embed_dim_(0) {
  if (layers_.empty()) throw DimensionError("attention layer set is empty");
  embed_dim_ = layers_.front().embed_dim();
  std::set<std::string> names;
  for (const auto& layer : layers_) {
    if (layer.embed_dim() != embed_dim_) {
      throw DimensionError("layer '" + layer.name() + "' has embedding dim " +
                           std::to_string(layer.embed_dim()) + ", set uses " +
                           std::to_string(embed_dim_));
    }
    if (!names.insert(layer.name()).second) {
      throw DimensionError("duplicate layer name '" + layer.name() + "'");
    }
  }
}

std::size_t AttentionLayerSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weights().size());
  return n;
}

bool operator==(const AttentionLayerSet& a, const AttentionLayerSet& b) {
  return a.layers_ == b.layers_;
}

void require_aligned(const AttentionLayerSet& a, const AttentionLayerSet& b) {
  if (a.size() != b.size()) {
    throw AlignmentError("layer sets differ in size: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.name() != y.name() || x.kind() != y.kind() || x.out_dim() != y.out_dim() ||
        x.embed_dim() != y.embed_dim()) {
      throw AlignmentError("entry " + std::to_string(i) + " mismatch: '" + x.name() + "' (" +
                           to_string(x.kind()) + ", " + shape_str(x.weights()) + ") vs '" +
                           y.name() + "' (" + to_string(y.kind()) + ", " +
                           shape_str(y.weights()) + ")");
    }
  }
}

Matrix paired_destination(const Embedding& source, const Embedding& destination) {
  if (source.dim() != destination.dim()) {
    throw DimensionError("source '" + source.label() + "' has dim " +
                         std::to_string(source.dim()) + " but destination '" +
                         destination.label() + "' has dim " + std::to_string(destination.dim()));
  }
  if (destination.tokens() == source.tokens()) return destination.data();
  if (destination.tokens() == 1) {
    return destination.data().replicate(1, source.tokens());
  }
  throw DimensionError("destination '" + destination.label() + "' has " +
                       std::to_string(destination.tokens()) + " tokens, source '" +
                       source.label() + "' has " + std::to_string(source.tokens()));
}

EditConfig EditConfig::unsafe_preset() { return EditConfig{}; }

EditConfig EditConfig::artistic_preset() {
  EditConfig config;
  config.lambda_reg = 1e-3;
  config.epochs = 10;
  return config;
}

EditConfig EditConfig::object_preset() {
  EditConfig config;
  config.lambda_reg = 0.1;
  return config;
}

void EditConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda_reg >= 0.0)) {
    throw DimensionError("lambda1, lambda2 and lambda_reg must be non-negative");
  }
  if (epochs < 0) throw DimensionError("epochs must be non-negative");
  if (!(solve_tol > 0.0) || !(oracle_tol > 0.0)) {
    throw DimensionError("solver tolerances must be positive");
  }
}

}  // namespace rece
