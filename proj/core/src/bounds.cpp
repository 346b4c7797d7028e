#include "rece/bounds.hpp"

#include "rece/edit_core.hpp"
#include "rece/error.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace rece {
namespace {

constexpr double kSlack = 1e-9;

bool within(double lhs, double rhs) { return lhs <= rhs + kSlack * (1.0 + std::abs(rhs)); }

std::vector<ConceptTask> as_tasks(std::span<const DerivedPair> erase) {
  std::vector<ConceptTask> tasks;
  tasks.reserve(erase.size());
  for (const auto& p : erase) tasks.push_back({p.c_prime, p.c_star, p.c_prime.label()});
  return tasks;
}

// Everything in the chain that does not depend on the projection matrices.
struct SharedTerms {
  double F2 = 0.0;
  double F3 = 0.0;
  double F3_upper = 0.0;
  double F3_triangle = 0.0;
  double U_inv_frob_sq = 0.0;
};

SharedTerms shared_terms(const UceEdit& edit, std::span<const ConceptTask> tasks) {
  const Eigen::Index d = edit.embed_dim();
  const Matrix& u = edit.denominator();
  const SymmetricSolver solver = edit.solver() ? *edit.solver() : SymmetricSolver(u, "U");
  const Matrix u_inv = solver.solve(Matrix::Identity(d, d));

  // N - U collapses to sum (c* - c') c'^T.
  Matrix n_minus_u = Matrix::Zero(d, d);
  double f3_upper = 0.0;
  double term_norm_sum = 0.0;
  for (const auto& task : tasks) {
    const Matrix dest = paired_destination(task.source, task.destination);
    for (Eigen::Index j = 0; j < task.source.tokens(); ++j) {
      const Matrix term = (dest.col(j) - task.source.data().col(j)) *
                          task.source.data().col(j).transpose();
      n_minus_u += term;
      f3_upper += term.squaredNorm();
      term_norm_sum += term.norm();
    }
  }
  // N U^-1 - I = (N - U) U^-1, and |X U^-1|_F = |U^-1 X^T|_F for symmetric U.
  const Matrix f2_matrix = solver.solve(n_minus_u.transpose());
  return {.F2 = f2_matrix.squaredNorm(),
          .F3 = n_minus_u.squaredNorm(),
          .F3_upper = f3_upper,
          .F3_triangle = term_norm_sum * term_norm_sum,
          .U_inv_frob_sq = u_inv.squaredNorm()};
}

BoundReport assemble(const SharedTerms& s, double f, double f1, double w1_sq, double d_sq) {
  BoundReport r;
  r.F = f;
  r.F1 = f1;
  r.F2 = s.F2;
  r.F3 = s.F3;
  r.F3_upper = s.F3_upper;
  r.F3_triangle = s.F3_triangle;
  r.U_inv_frob_sq = s.U_inv_frob_sq;
  r.W_new1_frob_sq = w1_sq;
  r.d_norm_sq = d_sq;
  r.chain_ok = r.check_chain();
  return r;
}

}  // namespace

bool BoundReport::check_chain() const {
  return within(F, F1 * d_norm_sq) && within(F1, W_new1_frob_sq * F2) &&
         within(F2, F3 * U_inv_frob_sq) && within(F3, F3_upper);
}

bool BoundReport::check_corrected_chain() const {
  return within(F, F1 * d_norm_sq) && within(F1, W_new1_frob_sq * F2) &&
         within(F2, F3 * U_inv_frob_sq) && within(F3, F3_triangle);
}

BoundReport bound_chain(const ProjectionMatrix& w_new1, std::span<const DerivedPair> erase,
                        std::span<const Embedding> preserve, double lambda1, double lambda2,
                        const Embedding& d_emb) {
  return bound_chain(AttentionLayerSet({w_new1}), erase, preserve, lambda1, lambda2, d_emb);
}

BoundReport bound_chain(const AttentionLayerSet& w_new1, std::span<const DerivedPair> erase,
                        std::span<const Embedding> preserve, double lambda1, double lambda2,
                        const Embedding& d_emb) {
  if (d_emb.dim() != w_new1.embed_dim()) {
    throw DimensionError("probe '" + d_emb.label() + "' has dim " + std::to_string(d_emb.dim()) +
                         ", layers expect " + std::to_string(w_new1.embed_dim()));
  }
  const auto tasks = as_tasks(erase);
  const UceEdit edit(tasks, preserve, lambda1, lambda2, w_new1.embed_dim());
  const SharedTerms shared = shared_terms(edit, tasks);

  double f = 0.0;
  double f1 = 0.0;
  double w1_sq = 0.0;
  for (const auto& layer : w_new1) {
    const ProjectionMatrix w_new2 = edit.apply(layer);
    f += drift(w_new2, layer, d_emb);
    f1 += (w_new2.weights() - layer.weights()).squaredNorm();
    w1_sq += layer.weights().squaredNorm();
  }
  return assemble(shared, f, f1, w1_sq, d_emb.data().squaredNorm());
}

std::string describe_violations(const BoundReport& r) {
  std::ostringstream os;
  if (!within(r.F, r.F1 * r.d_norm_sq)) os << "F=" << r.F << " > F1*|d|^2=" << r.F1 * r.d_norm_sq << "; ";
  if (!within(r.F1, r.W_new1_frob_sq * r.F2)) {
    os << "F1=" << r.F1 << " > |W1|^2*F2=" << r.W_new1_frob_sq * r.F2 << "; ";
  }
  if (!within(r.F2, r.F3 * r.U_inv_frob_sq)) {
    os << "F2=" << r.F2 << " > F3*|U^-1|^2=" << r.F3 * r.U_inv_frob_sq << "; ";
  }
  if (!within(r.F3, r.F3_upper)) {
    os << "F3=" << r.F3 << " > F3_upper=" << r.F3_upper;
    if (within(r.F3, r.F3_triangle)) os << " (within F3_triangle=" << r.F3_triangle << ")";
    os << "; ";
  }
  return os.str();
}

}  // namespace rece
