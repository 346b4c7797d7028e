#pragma once

#include "rece/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rece {

/// Brute-force minimizers used to certify the closed forms. They share no
/// code with edit_core or derivation: objectives and gradients are written
/// out separately here, and minimized by steepest descent with a
/// Barzilai-Borwein trial step and nonmonotone Armijo backtracking. No randomness.
///
/// Sizes are capped at kOracleMaxDim; larger inputs raise DimensionError.
inline constexpr Eigen::Index kOracleMaxDim = 64;

struct OracleOptions {
  /// Stop once |grad|_max <= grad_tol * max(1, |grad at start|_max).
  double grad_tol = 1e-12;
  int max_iters = 200000;
};

struct OracleOutcome {
  Matrix solution;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double grad_max_norm = 0.0;
  double grad_tol_abs = 0.0;  // the absolute threshold convergence was tested against
  /// |oracle - closed form|_F / |closed form|_F; infinity if the closed form
  /// could not be evaluated.
  double rel_gap_to_closed_form = 0.0;
};

OracleOutcome oracle_uce_edit(const ProjectionMatrix& w_old, std::span<const ConceptTask> erase,
                              std::span<const Embedding> preserve, double lambda1, double lambda2,
                              const OracleOptions& options = {});

OracleOutcome oracle_derive(const Embedding& c, const AttentionLayerSet& new_set,
                            const AttentionLayerSet& old_set, double lambda,
                            const OracleOptions& options = {});

struct Verdict {
  bool pass = false;
  double gap = 0.0;
  std::string metric;  // how `gap` was measured
  std::string detail;  // printable one-line summary
};

/// Relative Frobenius gap between a closed-form answer and an oracle run.
/// Fails when the gap exceeds `tol` or the oracle did not converge.
Verdict compare(const Matrix& closed, const OracleOutcome& outcome, double tol);

// Randomized certification suite behind `rece verify`.

struct SuiteOptions {
  int instances = 100;
  std::uint64_t seed = 20240501;
  /// Negative control: scales every closed-form edit and derived embedding by
  /// (1 + 1e-3) before comparison, so a healthy suite must report failures.
  bool inject_fault = false;
};

struct PropertyTally {
  std::string name;
  int passed = 0;
  int total = 0;
  std::string first_failure;
  bool ok() const noexcept { return passed == total; }
};

struct SuiteSummary {
  std::vector<PropertyTally> properties;
  bool all_passed() const;
  int total_cases() const;
};

SuiteSummary run_certification_suite(const SuiteOptions& options);

}  // namespace rece
