#include "rece/rece_driver.hpp"

#include "rece/edit_core.hpp"
#include "rece/error.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace rece {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// sum_i |W_i c - W_i^old c*|^2
double erasure_residual(const AttentionLayerSet& edited, const AttentionLayerSet& original,
                        const ConceptTask& task) {
  const Matrix dest = paired_destination(task.source, task.destination);
  double total = 0.0;
  for (std::size_t i = 0; i < edited.size(); ++i) {
    total += (edited[i].weights() * task.source.data() - original[i].weights() * dest)
                 .squaredNorm();
  }
  return total;
}

void record_probes(EpochReport& report, const AttentionLayerSet& before,
                   const AttentionLayerSet& after, const std::vector<DerivedPair>& erased,
                   const EraseSpec& spec, const EditConfig& config, const DriverOptions& options) {
  for (const auto& probe : options.probes) {
    report.drift_samples.emplace_back(probe.label(), drift(after, before, probe));
  }
  if (options.compute_bounds && !options.probes.empty()) {
    report.bound_chain = bound_chain(before, erased, spec.preserve, config.lambda1,
                                     config.lambda2, options.probes.front());
    if (!report.bound_chain->chain_ok) {
      report.warnings.push_back("bound chain violated: " +
                                describe_violations(*report.bound_chain));
    }
  }
}

template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (Error& e) {
    e.add_context(context);
    throw;
  }
}

}  // namespace

void EraseSpec::validate(Eigen::Index dim) const {
  if (tasks.empty()) throw DimensionError("erase spec has no tasks");
  for (const auto& task : tasks) {
    if (task.source.dim() != dim || task.destination.dim() != dim) {
      throw DimensionError("task '" + task.label + "' has dims " +
                           std::to_string(task.source.dim()) + "/" +
                           std::to_string(task.destination.dim()) + ", layers expect " +
                           std::to_string(dim));
    }
    paired_destination(task.source, task.destination);
  }
  for (const auto& p : preserve) {
    if (p.dim() != dim) {
      throw DimensionError("preserve '" + p.label() + "' has dim " + std::to_string(p.dim()) +
                           ", layers expect " + std::to_string(dim));
    }
  }
}

EpochOutcome initial_edit(const AttentionLayerSet& original, const EraseSpec& spec,
                          const EditConfig& config, const DriverOptions& options) {
  const auto start = Clock::now();
  return with_context("epoch 0", [&] {
    config.validate();
    spec.validate(original.embed_dim());
    EpochReport report;
    report.epoch = 0;
    AttentionLayerSet layers = edit_layer_set(original, spec.tasks, spec.preserve,
                                              config.lambda1, config.lambda2, &report.warnings);
    std::vector<DerivedPair> erased;
    for (const auto& task : spec.tasks) {
      report.per_task.push_back({.label = task.label,
                                 .c_prime_norm = task.source.data().norm(),
                                 .derivation_residual = std::nullopt,
                                 .erasure_residual = erasure_residual(layers, original, task)});
      erased.push_back({task.source, task.destination});
    }
    record_probes(report, original, layers, erased, spec, config, options);
    report.wall_time_s = seconds_since(start);
    return EpochOutcome{std::move(layers), std::move(report)};
  });
}

EpochOutcome epoch_step(const AttentionLayerSet& current, const AttentionLayerSet& original,
                        const EraseSpec& spec, const EditConfig& config, int epoch,
                        const DriverOptions& options) {
  const auto start = Clock::now();
  const std::string context = "epoch " + std::to_string(epoch);
  return with_context(context, [&] {
    if (epoch < 1) throw DimensionError("epoch_step needs epoch >= 1");
    config.validate();
    spec.validate(original.embed_dim());
    require_aligned(current, original);

    EpochReport report;
    report.epoch = epoch;
    // The factorization is shared, so a failure blocks every task at once.
    std::string all_tasks;
    for (const auto& task : spec.tasks) all_tasks += (all_tasks.empty() ? "" : ", ") + ("'" + task.label + "'");
    const EmbeddingDeriver deriver = with_context("deriving task " + all_tasks, [&] {
      return EmbeddingDeriver(current, original, config.lambda_reg, config.solve_tol);
    });

    std::vector<ConceptTask> derived;
    std::vector<DerivedPair> erased;
    derived.reserve(spec.tasks.size());
    for (const auto& task : spec.tasks) {
      DerivationResult result =
          with_context("task '" + task.label + "'", [&] { return deriver.derive(task.source); });
      report.per_task.push_back({.label = task.label,
                                 .c_prime_norm = result.c_prime.data().norm(),
                                 .derivation_residual = result.residual(),
                                 .erasure_residual = 0.0});
      for (auto& w : result.warnings) report.warnings.push_back(task.label + ": " + w);
      erased.push_back({result.c_prime, task.destination});
      derived.push_back({std::move(result.c_prime), task.destination, task.label});
    }

    AttentionLayerSet next = edit_layer_set(current, derived, spec.preserve, config.lambda1,
                                            config.lambda2, &report.warnings);
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      report.per_task[t].erasure_residual = erasure_residual(next, original, spec.tasks[t]);
    }
    record_probes(report, current, next, erased, spec, config, options);
    report.wall_time_s = seconds_since(start);
    return EpochOutcome{std::move(next), std::move(report)};
  });
}

ReceResult rece_erase(const AttentionLayerSet& layers, const EraseSpec& spec,
                      const EditConfig& config, const DriverOptions& options) {
  EpochOutcome step = initial_edit(layers, spec, config, options);
  ReceResult result{.final_layers = step.layers, .reports = {}, .snapshots = {}};

  auto commit = [&](EpochOutcome&& outcome) {
    if (options.on_epoch) options.on_epoch(outcome.report, outcome.layers);
    if (options.keep_snapshots) result.snapshots.push_back(outcome.layers);
    result.reports.push_back(std::move(outcome.report));
    result.final_layers = std::move(outcome.layers);
  };

  commit(std::move(step));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochOutcome next = epoch_step(result.final_layers, layers, spec, config, epoch, options);
    if (epoch >= 2) {
      const auto& prev = result.reports.back().per_task;
      for (std::size_t t = 0; t < prev.size(); ++t) {
        const double before = *prev[t].derivation_residual;
        const double now = *next.report.per_task[t].derivation_residual;
        if (!std::isfinite(now) || now > 10.0 * before) {
          std::ostringstream os;
          os << "derivation residual for '" << prev[t].label << "' grew from " << before << " to "
             << now;
          next.report.warnings.push_back(os.str());
        }
      }
    }
    commit(std::move(next));
  }
  return result;
}

FidelityReport fidelity_report(const AttentionLayerSet& original, const AttentionLayerSet& edited,
                               const EraseSpec& spec, const std::vector<Embedding>& probes) {
  require_aligned(original, edited);
  spec.validate(original.embed_dim());
  FidelityReport report;
  for (const auto& task : spec.tasks) {
    report.tasks.push_back({.label = task.label,
                            .residual_before = std::sqrt(erasure_residual(original, original, task)),
                            .residual_after = std::sqrt(erasure_residual(edited, original, task))});
  }
  for (const auto& probe : probes) {
    report.probe_drift.emplace_back(probe.label(), drift(edited, original, probe));
  }
  for (std::size_t i = 0; i < original.size(); ++i) {
    report.layer_distance.emplace_back(original[i].name(),
                                       (edited[i].weights() - original[i].weights()).norm());
  }
  return report;
}

}  // namespace rece
