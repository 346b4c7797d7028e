#pragma once

#include "rece/types.hpp"

#include <span>
#include <string>

namespace rece {

/// Quantities bounding how far one derive-then-erase step can move the
/// outputs of an unrelated probe embedding d:
///
///   F  = |W2 d - W1 d|^2              <= F1 |d|^2
///   F1 = |W2 - W1|_F^2                <= |W1|_F^2 F2
///   F2 = |N U^-1 - I|_F^2             <= F3 |U^-1|_F^2
///   F3 = |sum (c* - c') c'^T|_F^2     <= sum |(c* - c') c'^T|_F^2
///
/// where W2 is W1 edited with sources c' and destinations c*, U the edit's
/// denominator and N its numerator. Shared preserve and lambda2 terms cancel
/// in N - U, so F3 does not depend on lambda1 or lambda2.
///
/// The last link only holds for a single erased column: for k columns the
/// triangle inequality gives F3 <= (sum |(c* - c') c'^T|_F)^2, which can be up
/// to k times F3_upper. That bound is kept as F3_triangle, and
/// check_corrected_chain() tests the chain with it in place of F3_upper.
struct BoundReport {
  double F = 0.0;
  double F1 = 0.0;
  double F2 = 0.0;
  double F3 = 0.0;
  double F3_upper = 0.0;
  double F3_triangle = 0.0;
  double U_inv_frob_sq = 0.0;
  double W_new1_frob_sq = 0.0;
  double d_norm_sq = 0.0;
  bool chain_ok = false;

  /// Re-evaluates chain_ok from the stored values, each inequality with slack
  /// 1e-9 * (1 + |right-hand side|).
  bool check_chain() const;
  bool check_corrected_chain() const;
};

/// Derived sources c' paired with the destinations they are mapped to.
struct DerivedPair {
  Embedding c_prime;
  Embedding c_star;
};

BoundReport bound_chain(const ProjectionMatrix& w_new1, std::span<const DerivedPair> erase,
                        std::span<const Embedding> preserve, double lambda1, double lambda2,
                        const Embedding& d_emb);

/// The same chain over a whole layer set: F, F1 and |W1|_F^2 are summed over
/// layers, which keeps every inequality valid.
BoundReport bound_chain(const AttentionLayerSet& w_new1, std::span<const DerivedPair> erase,
                        std::span<const Embedding> preserve, double lambda1, double lambda2,
                        const Embedding& d_emb);

/// Human-readable list of the inequalities that failed (empty if none).
std::string describe_violations(const BoundReport& report);

}  // namespace rece
