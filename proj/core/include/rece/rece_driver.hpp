#pragma once

#include "rece/bounds.hpp"
#include "rece/derivation.hpp"
#include "rece/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rece {

/// Concepts to erase and concepts whose projections should stay put.
struct EraseSpec {
  std::vector<ConceptTask> tasks;
  std::vector<Embedding> preserve;

  /// Throws when `tasks` is empty or any dimension differs from `dim`.
  void validate(Eigen::Index dim) const;
};

struct TaskEpochRecord {
  std::string label;
  /// Norm of the erased source over all tokens: the original concept at
  /// epoch 0, the derived embedding afterwards.
  double c_prime_norm = 0.0;
  /// Derivation objective without the ridge term; absent at epoch 0.
  std::optional<double> derivation_residual;
  /// sum_i |W_i c - W_i^old c*|^2 after this epoch, for the original concept.
  double erasure_residual = 0.0;
};

struct EpochReport {
  int epoch = 0;  // 0 is the preliminary closed-form edit
  std::vector<TaskEpochRecord> per_task;
  /// Squared output shift of each probe relative to the previous epoch.
  std::vector<std::pair<std::string, double>> drift_samples;
  std::optional<BoundReport> bound_chain;
  double wall_time_s = 0.0;
  std::vector<std::string> warnings;
};

/// Extras that do not change the edit itself.
struct DriverOptions {
  /// Unrelated embeddings whose drift is recorded every epoch.
  std::vector<Embedding> probes;
  /// Evaluate the perturbation bound chain for the first probe each epoch.
  bool compute_bounds = false;
  /// Keep every epoch's layer set in ReceResult::snapshots.
  bool keep_snapshots = true;
  /// Called after every epoch (including 0) with that epoch's report and weights.
  std::function<void(const EpochReport&, const AttentionLayerSet&)> on_epoch;
};

struct ReceResult {
  AttentionLayerSet final_layers;
  std::vector<EpochReport> reports;
  std::vector<AttentionLayerSet> snapshots;  // index == epoch, when kept
};

struct EpochOutcome {
  AttentionLayerSet layers;
  EpochReport report;
};

/// Epoch 0: the plain closed-form edit of `original` with the spec's tasks.
EpochOutcome initial_edit(const AttentionLayerSet& original, const EraseSpec& spec,
                          const EditConfig& config, const DriverOptions& options = {});

/// One derive-then-erase iteration (epoch >= 1). Each task's concept is
/// re-derived against the original weights and the current ones, then the
/// derived embeddings are erased from the current weights toward the tasks'
/// original destinations, with the preserve set re-applied.
EpochOutcome epoch_step(const AttentionLayerSet& current, const AttentionLayerSet& original,
                        const EraseSpec& spec, const EditConfig& config, int epoch,
                        const DriverOptions& options = {});

/// initial_edit followed by config.epochs epoch_steps.
ReceResult rece_erase(const AttentionLayerSet& layers, const EraseSpec& spec,
                      const EditConfig& config, const DriverOptions& options = {});

struct TaskFidelity {
  std::string label;
  double residual_before = 0.0;  // |W_old c - W_old c*| over all layers
  double residual_after = 0.0;   // |W_new c - W_old c*|
};

struct FidelityReport {
  std::vector<TaskFidelity> tasks;
  std::vector<std::pair<std::string, double>> probe_drift;  // drift() per probe
  std::vector<std::pair<std::string, double>> layer_distance;  // |W_new - W_old|_F
};

FidelityReport fidelity_report(const AttentionLayerSet& original, const AttentionLayerSet& edited,
                               const EraseSpec& spec, const std::vector<Embedding>& probes);

}  // namespace rece
