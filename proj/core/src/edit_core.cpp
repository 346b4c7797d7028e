#include "rece/edit_core.hpp"

#include "rece/error.hpp"

#include <sstream>

namespace rece {
namespace {

void require_dim(const std::string& what, Eigen::Index got, Eigen::Index expected) {
  if (got != expected) {
    throw DimensionError(what + " has dim " + std::to_string(got) + ", expected " +
                         std::to_string(expected));
  }
}

void check_inputs(std::span<const ConceptTask> erase, std::span<const Embedding> preserve,
                  Eigen::Index d) {
  for (const auto& task : erase) {
    require_dim("erase source '" + task.source.label() + "'", task.source.dim(), d);
    require_dim("erase destination '" + task.destination.label() + "'", task.destination.dim(),
                d);
  }
  for (const auto& p : preserve) require_dim("preserve '" + p.label() + "'", p.dim(), d);
}

}  // namespace

Matrix project_kv(const ProjectionMatrix& w, const Embedding& c) {
  if (w.embed_dim() != c.dim()) {
    throw DimensionError("projection '" + w.name() + "' expects dim " +
                         std::to_string(w.embed_dim()) + " but embedding '" + c.label() +
                         "' has dim " + std::to_string(c.dim()));
  }
  return w.weights() * c.data();
}

double uce_objective(const Matrix& w, const Matrix& w_old, std::span<const ConceptTask> erase,
                     std::span<const Embedding> preserve, double lambda1, double lambda2) {
  if (w.rows() != w_old.rows() || w.cols() != w_old.cols()) {
    throw DimensionError("candidate weights are " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + ", reference weights are " +
                         std::to_string(w_old.rows()) + "x" + std::to_string(w_old.cols()));
  }
  check_inputs(erase, preserve, w.cols());
  double total = 0.0;
  for (const auto& task : erase) {
    const Matrix dest = paired_destination(task.source, task.destination);
    total += (w * task.source.data() - w_old * dest).squaredNorm();
  }
  for (const auto& p : preserve) total += lambda1 * ((w - w_old) * p.data()).squaredNorm();
  total += lambda2 * (w - w_old).squaredNorm();
  return total;
}

UceEdit::UceEdit(std::span<const ConceptTask> erase, std::span<const Embedding> preserve,
                 double lambda1, double lambda2, Eigen::Index embed_dim, double rank_tol)
    : dim_(embed_dim) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw DimensionError("lambda1 and lambda2 must be >= 0");
  check_inputs(erase, preserve, dim_);

  Eigen::Index k = 0;
  for (const auto& task : erase) k += task.source.tokens();
  sources_.resize(dim_, k);
  shift_.resize(dim_, k);
  Eigen::Index col = 0;
  for (const auto& task : erase) {
    const Eigen::Index m = task.source.tokens();
    sources_.middleCols(col, m) = task.source.data();
    shift_.middleCols(col, m) = paired_destination(task.source, task.destination) - task.source.data();
    col += m;
  }

  denominator_ = Matrix::Identity(dim_, dim_) * lambda2;
  if (k > 0) denominator_.selfadjointView<Eigen::Lower>().rankUpdate(sources_);
  for (const auto& p : preserve) {
    denominator_.selfadjointView<Eigen::Lower>().rankUpdate(p.data(), lambda1);
  }
  denominator_.triangularView<Eigen::StrictlyUpper>() = denominator_.transpose();

  // Each column contributes (c* - c) c^T to N - D; it vanishes when either factor does.
  for (Eigen::Index j = 0; j < k && identity_; ++j) {
    if (!shift_.col(j).isZero(0.0) && !sources_.col(j).isZero(0.0)) identity_ = false;
  }
  if (identity_) return;

  solver_.emplace(denominator_, "denominator D", rank_tol);
  solved_ = solver_->solve(sources_);
  if (solver_->ill_conditioned()) {
    std::ostringstream os;
    os << "denominator D is ill-conditioned (condition estimate " << solver_->condition_estimate()
       << ")";
    warnings_.push_back(os.str());
  }
}

Matrix UceEdit::numerator() const {
  Matrix n = denominator_;
  if (sources_.cols() > 0) n.noalias() += shift_ * sources_.transpose();
  return n;
}

ProjectionMatrix UceEdit::apply(const ProjectionMatrix& w_old) const {
  if (w_old.embed_dim() != dim_) {
    throw DimensionError("projection '" + w_old.name() + "' has dim " +
                         std::to_string(w_old.embed_dim()) + ", edit was prepared for dim " +
                         std::to_string(dim_));
  }
  if (identity_) return w_old;
  const Matrix moved = w_old.weights() * shift_;  // out x k
  Matrix w = w_old.weights();
  w.noalias() += moved * solved_.transpose();
  return w_old.with_weights(std::move(w));
}

ProjectionMatrix uce_edit(const ProjectionMatrix& w_old, std::span<const ConceptTask> erase,
                          std::span<const Embedding> preserve, double lambda1, double lambda2) {
  return UceEdit(erase, preserve, lambda1, lambda2, w_old.embed_dim()).apply(w_old);
}

AttentionLayerSet edit_layer_set(const AttentionLayerSet& layers,
                                 std::span<const ConceptTask> erase,
                                 std::span<const Embedding> preserve, double lambda1,
                                 double lambda2, std::vector<std::string>* warnings) {
  const UceEdit edit(erase, preserve, lambda1, lambda2, layers.embed_dim());
  if (warnings) warnings->insert(warnings->end(), edit.warnings().begin(), edit.warnings().end());
  if (edit.is_identity()) return layers;
  std::vector<ProjectionMatrix> out;
  out.reserve(layers.size());
  for (const auto& layer : layers) out.push_back(edit.apply(layer));
  return AttentionLayerSet(std::move(out));
}

double drift(const ProjectionMatrix& w_a, const ProjectionMatrix& w_b, const Embedding& probe) {
  if (w_a.out_dim() != w_b.out_dim() || w_a.embed_dim() != w_b.embed_dim()) {
    throw DimensionError("cannot compare '" + w_a.name() + "' (" + std::to_string(w_a.out_dim()) +
                         "x" + std::to_string(w_a.embed_dim()) + ") with '" + w_b.name() + "' (" +
                         std::to_string(w_b.out_dim()) + "x" + std::to_string(w_b.embed_dim()) +
                         ")");
  }
  return (project_kv(w_a, probe) - project_kv(w_b, probe)).squaredNorm();
}

double drift(const AttentionLayerSet& a, const AttentionLayerSet& b, const Embedding& probe) {
  require_aligned(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += drift(a[i], b[i], probe);
  return total;
}

}  // namespace rece
